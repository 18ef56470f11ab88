"""Command-line entry point ``isac-pcrb``.

Exit codes: 0 success, 2 configuration or input error, 3 solver failure on
every point, 4 invariant violation under ``--strict``.
"""
from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import sweep as sweep_mod
from .beamopt import BeamformingError, solve_beamforming
from .config import SCHEMES, ConfigError, load_config
from .fisher import SingularFimError, pcrb_periodic
from .mcsim import SensingScenario, run_trials

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_INVARIANT = 4

MC_FACTOR = 0.95

log = logging.getLogger("isac_pcrb")


class InputError(ValueError):
    pass


def read_matrix(path) -> np.ndarray:
    """Parse a row-major complex matrix written as whitespace-separated ``re+imj`` tokens."""
    try:
        with open(path) as fh:
            lines = [ln.split("#", 1)[0].split() for ln in fh]
    except OSError as e:
        raise InputError(f"cannot read {path}: {e.strerror}") from None
    rows = [ln for ln in lines if ln]
    try:
        M = np.array([[complex(tok) for tok in row] for row in rows])
    except ValueError as e:
        raise InputError(f"{path}: bad complex token ({e})") from None
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.size == 0:
        raise InputError(f"{path}: expected a square matrix, got rows of lengths {[len(r) for r in rows]}")
    return M


def _parse_schemes(text):
    names = [s.strip() for s in text.split(",") if s.strip()]
    bad = [s for s in names if s not in SCHEMES]
    if bad or not names:
        raise argparse.ArgumentTypeError(f"schemes must be drawn from {','.join(SCHEMES)}")
    return names


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)

    def progress(row):
        log.info("%-8s R=%.4f pcrb=%.6e case=%s %s", row.scheme, row.rate_target_bpshz, row.pcrb,
                 row.case or "-", row.status)

    rows = sweep_mod.run_sweep(cfg, schemes=args.schemes, seed=args.seed, workers=args.workers,
                               progress=progress)
    text = sweep_mod.emit(rows, args.format, args.out)
    if args.out is None:
        sys.stdout.write(text)
    if not any(r.ok for r in rows):
        log.error("solver failed on every point")
        return EXIT_SOLVER
    problems = sweep_mod.check_invariants(rows)
    for p in problems:
        log.warning("invariant: %s", p)
    if args.strict and problems:
        return EXIT_INVARIANT
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    sc = cfg.scenario
    cap = sc.mrt_capacity
    if not 0 <= args.rate <= cap:
        raise ConfigError("--rate", f"{args.rate} bps/Hz is outside [0, MRT capacity {cap:.6g}]")
    mat = sc.matrices()
    try:
        beams = solve_beamforming(sc.instance(args.rate, mat), sc.tol)
    except BeamformingError as e:
        log.error("solver failed: %s", e)
        return EXIT_SOLVER
    trials = args.trials if args.trials is not None else cfg.mc.trials
    seed = args.seed if args.seed is not None else cfg.mc.seed
    scenario = SensingScenario(sc.geom, sc.angles, sc.prior, sc.link, mat)
    stats = run_trials(scenario, (beams.w, beams.S), trials, rng=seed, grid_size=cfg.mc.grid_size,
                       batches=args.batches)
    print(f"rate_target_bpshz  {args.rate:.12g}")
    print(f"case               {beams.case_label}")
    print(f"trials             {stats.trials}")
    print(f"pcrb               {stats.pcrb_ref:.12g}")
    print(f"mce                {stats.mce:.12g}  (se {stats.mce_se:.3g})")
    print(f"mse                {stats.mse:.12g}")
    print(f"mce/pcrb           {stats.mce_over_pcrb:.6g}")
    bad = []
    if stats.mce < MC_FACTOR * stats.pcrb_ref:
        bad.append(f"empirical MCE below {MC_FACTOR} x PCRB")
    if any(m > s + 1e-12 for m, s in zip(stats.batch_mce, stats.batch_mse)):
        bad.append("MCE exceeds MSE on some batch")
    for b in bad:
        log.warning("invariant: %s", b)
    return EXIT_INVARIANT if (args.strict and bad) else EXIT_OK


def cmd_pcrb(args) -> int:
    cfg = load_config(args.config)
    sc = cfg.scenario
    R = read_matrix(args.covariance)
    n = sc.geom.n_tx
    if R.shape != (n, n):
        raise InputError(f"covariance is {R.shape[0]}x{R.shape[1]}, expected {n}x{n}")
    if np.max(np.abs(R - R.conj().T)) > 1e-9 * max(np.max(np.abs(R)), 1e-300):
        raise InputError("covariance is not Hermitian")
    R = 0.5 * (R + R.conj().T)
    mat = sc.matrices()
    try:
        value = pcrb_periodic(mat, sc.link, R)
    except SingularFimError as e:
        raise InputError(str(e)) from None
    print(f"{value:.12g}")
    power = float(np.trace(R).real)
    if power > sc.power * (1 + 1e-8):
        log.warning("covariance uses %.6g W, above the budget of %.6g W", power, sc.power)
        if args.strict:
            return EXIT_INVARIANT
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="isac-pcrb", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="progress on stderr")
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config (default: the shipped scenario)")
    common.add_argument("--strict", action="store_true", help="exit 4 on invariant violations")

    s = sub.add_parser("sweep", parents=[common], help="rate-target sweep over all schemes")
    s.add_argument("--out", help="write here instead of stdout")
    s.add_argument("--schemes", type=_parse_schemes, default=None,
                   help=f"comma-separated subset of {','.join(SCHEMES)}")
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--format", choices=("csv", "human"), default="csv")
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_sweep)

    v = sub.add_parser("validate", parents=[common], help="Monte-Carlo check of the bound at one rate")
    v.add_argument("--rate", type=float, required=True)
    v.add_argument("--trials", type=int, default=None)
    v.add_argument("--seed", type=int, default=None)
    v.add_argument("--batches", type=int, default=10)
    v.set_defaults(func=cmd_validate)

    c = sub.add_parser("pcrb", parents=[common], help="evaluate the PCRB of a given covariance")
    c.add_argument("--covariance", required=True, help="matrix file of re+imj tokens, one row per line")
    c.set_defaults(func=cmd_pcrb)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (ConfigError, InputError) as e:
        print(f"isac-pcrb: error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
