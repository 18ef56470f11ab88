"""Rate-target sweeps over all schemes and CSV/table emission."""
from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .baselines import dual_functional, most_probable_angle, sensing_oriented
from .beamopt import BeamformingError, BeamSolution, ConvexInstance, solve_beamforming
from .config import ExperimentConfig, Scenario
from .fisher import SingularFimError

COLUMNS = (
    "rate_target_bpshz",
    "scheme",
    "pcrb",
    "rate_achieved_bpshz",
    "case",
    "rank_rc",
    "rank_rs",
    "sensing_power_frac",
    "kkt_residual",
    "solve_ms",
    "status",
)
# schemes whose output must honour the rate target
RATE_CONSTRAINED = ("proposed", "b2", "b3")
ORDER_SLACK = 1e-8
RATE_SLACK = 1e-6


@dataclass
class SweepRow:
    rate_target_bpshz: float
    scheme: str
    pcrb: float = math.nan
    rate_achieved_bpshz: float = math.nan
    case: str = ""
    rank_rc: int = -1
    rank_rs: int = -1
    sensing_power_frac: float = math.nan
    kkt_residual: float = math.nan
    solve_ms: float = math.nan
    status: str = ""
    sensing_beams: int = field(default=-1, repr=False)
    solution: BeamSolution | None = field(default=None, repr=False, compare=False)

    @property
    def ok(self) -> bool:
        return self.status.startswith("optimal")


def _row(rate_target, scheme, beams: BeamSolution, elapsed) -> SweepRow:
    total = beams.total_power
    return SweepRow(
        rate_target_bpshz=float(rate_target),
        scheme=scheme,
        pcrb=float(beams.pcrb),
        rate_achieved_bpshz=float(beams.rate),
        case=beams.case_label,
        rank_rc=int(beams.rank_rc),
        rank_rs=int(beams.rank_rs),
        sensing_power_frac=beams.sensing_power / total if total > 0 else 0.0,
        kkt_residual=float(beams.kkt_residual),
        solve_ms=1e3 * elapsed,
        status=beams.status,
        sensing_beams=len(beams.S),
        solution=beams,
    )


def _failed(rate_target, scheme, err, elapsed) -> SweepRow:
    return SweepRow(float(rate_target), scheme, solve_ms=1e3 * elapsed,
                    status=f"error:{type(err).__name__}")


def _run_one(task):
    scheme, rate_target, inst, sc, seed = task
    start = time.perf_counter()
    try:
        if scheme == "proposed":
            beams = solve_beamforming(inst, sc.tol)
        elif scheme == "b1":
            beams = sensing_oriented(inst, sc.tol)
        elif scheme == "b2":
            beams = dual_functional(inst, sc.tol, rng=seed)
        elif scheme == "b3":
            beams = most_probable_angle(inst, sc.geom, sc.angles, sc.prior, sc.tol)
        else:
            raise ValueError(f"unknown scheme {scheme!r}")
    except (BeamformingError, SingularFimError, np.linalg.LinAlgError, ArithmeticError) as err:
        return _failed(rate_target, scheme, err, time.perf_counter() - start)
    return _row(rate_target, scheme, beams, time.perf_counter() - start)


def run_sweep(cfg: ExperimentConfig, schemes=None, seed: int | None = None, workers: int = 1,
              progress=None) -> list[SweepRow]:
    """Solve every (rate target, scheme) pair and return rows sorted by target then scheme.

    Benchmark 1 ignores the rate target, so it is solved once and its row
    repeated at every target.  ``progress(row)`` is called as rows complete.
    """
    sc: Scenario = cfg.scenario
    schemes = list(cfg.sweep.schemes if schemes is None else schemes)
    seed = cfg.mc.seed if seed is None else int(seed)
    mat = sc.matrices()
    grid = cfg.rate_grid()
    base: ConvexInstance = sc.instance(0.0, mat)

    tasks = []
    for i, r in enumerate(grid):
        for s in schemes:
            if s == "b1" and i > 0:
                continue
            child = int(np.random.SeedSequence([seed, i]).generate_state(1)[0])
            tasks.append((s, float(r), base.with_rate(r), sc, child))

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            done = list(pool.map(_run_one, tasks))
    else:
        done = []
        for t in tasks:
            done.append(_run_one(t))
            if progress is not None:
                progress(done[-1])

    rows = list(done)
    if "b1" in schemes:
        b1 = next(r for r in done if r.scheme == "b1")
        for r in grid[1:]:
            copy = SweepRow(**{**b1.__dict__, "rate_target_bpshz": float(r)})
            rows.append(copy)
    rank = {s: k for k, s in enumerate(schemes)}
    rows.sort(key=lambda row: (row.rate_target_bpshz, rank[row.scheme]))
    return rows


def _fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".12g")
    return str(value)


def to_csv(rows, include_timing: bool = True) -> str:
    """CSV text with the fixed column order; ``include_timing=False`` blanks ``solve_ms``."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for row in rows:
        values = [_fmt(getattr(row, c)) for c in COLUMNS]
        if not include_timing:
            values[COLUMNS.index("solve_ms")] = ""
        writer.writerow(values)
    return buf.getvalue()


def to_human(rows) -> str:
    head = f"{'R_target':>9} {'scheme':>8} {'PCRB':>13} {'rate':>9} {'case':>4} {'rk':>5} {'sense%':>7} {'kkt':>9} {'ms':>7}  status"
    lines = [head, "-" * len(head)]
    for r in rows:
        rk = f"{r.rank_rc},{r.rank_rs}" if r.rank_rc >= 0 else "-"
        lines.append(
            f"{r.rate_target_bpshz:9.4f} {r.scheme:>8} {r.pcrb:13.6e} {r.rate_achieved_bpshz:9.4f} "
            f"{r.case or '-':>4} {rk:>5} {100 * r.sensing_power_frac:7.2f} {r.kkt_residual:9.1e} "
            f"{r.solve_ms:7.0f}  {r.status}"
        )
    return "\n".join(lines) + "\n"


def emit(rows, fmt: str = "csv", path=None) -> str:
    """Render rows as ``csv`` or ``human`` text; write to ``path`` when given."""
    if fmt == "csv":
        text = to_csv(rows)
    elif fmt == "human":
        text = to_human(rows)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def check_invariants(rows) -> list[str]:
    """Violations of the sweep-level invariants, as readable messages."""
    problems = []
    by_target: dict[float, dict[str, SweepRow]] = {}
    for r in rows:
        by_target.setdefault(r.rate_target_bpshz, {})[r.scheme] = r
        if not r.ok:
            continue
        if r.scheme in RATE_CONSTRAINED and r.rate_achieved_bpshz < r.rate_target_bpshz - RATE_SLACK:
            problems.append(f"{r.scheme} at {r.rate_target_bpshz:.6g}: rate {r.rate_achieved_bpshz:.9g} below target")
        if r.sensing_beams > 1:
            problems.append(f"{r.scheme} at {r.rate_target_bpshz:.6g}: {r.sensing_beams} sensing beams")
    for target, group in by_target.items():
        p = group.get("proposed")
        if p is None or not p.ok:
            continue
        b1 = group.get("b1")
        if b1 is not None and b1.ok and b1.pcrb > p.pcrb + ORDER_SLACK:
            problems.append(f"b1 worse than proposed at {target:.6g}")
        for name in ("b2", "b3"):
            b = group.get(name)
            if b is not None and b.ok and p.pcrb > b.pcrb + ORDER_SLACK:
                problems.append(f"proposed worse than {name} at {target:.6g}")
    prop = [r for r in rows if r.scheme == "proposed" and r.ok]
    for a, b in zip(prop, prop[1:]):
        if b.pcrb < a.pcrb - ORDER_SLACK:
            problems.append(f"proposed PCRB decreases between {a.rate_target_bpshz:.6g} and {b.rate_target_bpshz:.6g}")
    return problems
