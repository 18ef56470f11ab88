"""Acceptance suite: one PASS/FAIL line per criterion, printed as it runs."""
import time

import numpy as np
import pytest
from scipy import integrate

from isac_pcrb.baselines import sensing_oriented
from isac_pcrb.fisher import SensingLinkBudget, fim_matrix, pcrb_periodic
from isac_pcrb.geometry import steering_rx, steering_rx_deriv, steering_tx, steering_tx_deriv
from isac_pcrb.mcsim import SensingScenario, run_trials
from isac_pcrb.prior import VonMisesMixture, wrap_angle
from isac_pcrb.sweep import run_sweep, to_csv

from conftest import random_hermitian_psd


@pytest.fixture
def report(capsys):
    def emit(tag, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {tag}: {detail}")
        assert ok, f"{tag}: {detail}"
    return emit


def _by_scheme(rows, scheme):
    return [r for r in rows if r.scheme == scheme]


def test_ac01_sensing_oriented_rate_anchor(scenario, mat, report):
    start = time.perf_counter()
    beams = sensing_oriented(scenario.instance(0.0, mat), scenario.tol)
    elapsed = time.perf_counter() - start
    ok = 1.911 <= beams.rate <= 1.950 and elapsed <= 10.0
    report("AC1 sensing-oriented rate", ok, f"rate {beams.rate:.5f} bps/Hz in [1.911, 1.950], {elapsed:.1f} s <= 10 s")


def test_ac02_relaxation_tightness(timed_sweep, report):
    rows, elapsed = timed_sweep
    prop = _by_scheme(rows, "proposed")
    losses = [abs(r.solution.notes["tightness_loss"]) for r in prop if r.ok]
    beams = max(r.sensing_beams for r in rows if r.ok)
    ok = (len(prop) == 20 and len(losses) == 20 and max(losses) <= 1e-6 and beams <= 1
          and elapsed <= 300.0)
    report("AC2 tightness", ok, f"{len(losses)}/20 solved, worst loss {max(losses, default=np.nan):.2e} <= 1e-6, "
           f"max |S| {beams} <= 1, sweep {elapsed:.0f} s <= 300 s")


def test_ac03_case_structure(sweep_rows, report):
    prop = _by_scheme(sweep_rows, "proposed")
    cases = "".join({"I": "1", "II": "2", "III": "3"}.get(r.case, "?") for r in prop)
    first_i = prop[0].case == "I"
    case3 = [r for r in prop if r.case == "III" and r.sensing_power_frac > 0.01]
    top = prop[-1]
    ok = first_i and bool(case3) and top.sensing_power_frac == 0.0
    report("AC3 case structure", ok, f"cases {cases}; {len(case3)} Case-III points with sensing share > 1%; "
           f"share at top rate {top.sensing_power_frac:g}")


def test_ac04_scheme_ordering(sweep_rows, report):
    by_target = {}
    for r in sweep_rows:
        by_target.setdefault(r.rate_target_bpshz, {})[r.scheme] = r
    bad = []
    for target, g in by_target.items():
        if not all(g[s].ok for s in ("proposed", "b1", "b2", "b3")):
            bad.append(f"{target:.3f}: unsolved")
            continue
        p = g["proposed"].pcrb
        if g["b1"].pcrb > p + 1e-8 or p > g["b2"].pcrb + 1e-8 or p > g["b3"].pcrb + 1e-8:
            bad.append(f"{target:.3f}")
    report("AC4 scheme ordering", not bad and len(by_target) == 20,
           f"b1 <= proposed <= min(b2, b3) at {len(by_target) - len(bad)}/{len(by_target)} points")


def _quad_score_energy(mix):
    def f(t):
        return mix.score(np.array([t]))[0] ** 2 * mix.pdf(np.array([t]))[0]
    pts = sorted(set(float(m) for m in wrap_angle(mix.means)))
    return integrate.quad(f, -np.pi, np.pi, points=pts, limit=2000, epsabs=0, epsrel=1e-11)[0]


def test_ac05_score_energy_closed_form(scenario, report):
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    mixes = [scenario.prior]
    for _ in range(50):
        k = int(rng.integers(1, 4))
        w = rng.dirichlet(np.ones(k))
        w[-1] = 1.0 - w[:-1].sum()
        mixes.append(VonMisesMixture.from_arrays(rng.uniform(-np.pi, np.pi, k), rng.uniform(0.1, 500.0, k), w))
    errs = [abs(m.score_energy() / _quad_score_energy(m) - 1.0) for m in mixes]
    elapsed = time.perf_counter() - start
    ok = max(errs) <= 1e-6 and elapsed <= 30.0
    report("AC5 score energy", ok, f"worst relative error {max(errs):.2e} <= 1e-6 over {len(mixes)} mixtures, "
           f"{elapsed:.1f} s <= 30 s")


def test_ac06_fim_identities(scenario, mat, report):
    g, ang = scenario.geom, scenario.angles
    nn = g.n_tx * g.n_rx
    tr3 = abs(np.trace(mat.A3).real / nn - 1.0)
    tr2 = abs(np.trace(mat.A2)) / nn
    herm = max(np.max(np.abs(A - A.conj().T)) for A in (mat.A1, mat.A3))
    psd = min(np.linalg.eigvalsh(A)[0] / np.trace(A).real for A in (mat.A1, mat.A3))
    th = np.linspace(-np.pi, np.pi, 37)
    h = 1e-6
    fd = 0.0
    for f, df in ((steering_tx, steering_tx_deriv), (steering_rx, steering_rx_deriv)):
        num = (f(g, ang, th + h) - f(g, ang, th - h)) / (2 * h)
        fd = max(fd, float(np.max(np.abs(num - df(g, ang, th)))))
    ok = tr3 <= 1e-8 and tr2 <= 1e-8 and herm <= 1e-10 and psd >= -1e-9 and fd <= 1e-6
    report("AC6 FIM identities", ok, f"tr A3 rel err {tr3:.1e}, |tr A2|/(NrNt) {tr2:.1e}, asym {herm:.1e}, "
           f"min eig/trace {psd:.1e}, derivative error {fd:.1e}")


def test_ac07_closed_form_vs_inversion(scenario, mat, report):
    rng = np.random.default_rng(7)
    n = scenario.geom.n_tx
    worst = 0.0
    for _ in range(100):
        R = random_hermitian_psd(rng, n, rank=int(rng.integers(1, n + 1)))
        R *= scenario.power / np.trace(R).real
        link = SensingLinkBudget(10 ** rng.uniform(-7, -4) * np.exp(1j * rng.uniform(0, 2 * np.pi)),
                                 int(rng.integers(1, 100)), 10 ** rng.uniform(-13, -11))
        closed = pcrb_periodic(mat, link, R)
        inv = np.linalg.inv(fim_matrix(mat, link, R))[0, 0]
        oracle = 2.0 - 2.0 / np.sqrt(1.0 + inv)
        worst = max(worst, abs(closed / oracle - 1.0))
    report("AC7 closed form vs 3x3 inversion", worst <= 1e-10, f"worst relative error {worst:.2e} <= 1e-10")


def test_ac08_kkt_certificate(sweep_rows, report):
    prop = [r for r in _by_scheme(sweep_rows, "proposed") if r.ok]
    kkt = [r.kkt_residual for r in prop if np.isfinite(r.kkt_residual)]
    case3 = [r.solution for r in prop if r.case == "III"]
    mu = max((abs(b.notes["mu_power"] - b.eigenvalues[0]) / b.eigenvalues[0] for b in case3), default=0.0)
    hv = max((b.notes["h_V"] for b in case3), default=0.0)
    ok = len(prop) == 20 and max(kkt) <= 1e-5 and bool(case3) and mu <= 1e-4 and hv <= 1e-4
    report("AC8 KKT certificate", ok, f"worst residual {max(kkt):.1e} <= 1e-5 on {len(kkt)} points; "
           f"Case III ({len(case3)} points): |mu_P - d1|/d1 {mu:.1e}, |h^H V|/|h| {hv:.1e} <= 1e-4")


def test_ac09_monte_carlo_bound(scenario, mat, cfg, sweep_rows, report):
    prop = _by_scheme(sweep_rows, "proposed")
    mid = prop[len(prop) // 2]
    beams = mid.solution
    start = time.perf_counter()
    sc = SensingScenario(scenario.geom, scenario.angles, scenario.prior, scenario.link, mat)
    stats = run_trials(sc, (beams.w, beams.S), 2000, rng=cfg.mc.seed, grid_size=cfg.mc.grid_size, batches=10)
    elapsed = time.perf_counter() - start
    per_batch = all(m <= s for m, s in zip(stats.batch_mce, stats.batch_mse))
    ok = stats.mce >= 0.95 * stats.pcrb_ref and per_batch and elapsed <= 300.0
    report("AC9 Monte-Carlo bound", ok,
           f"R={mid.rate_target_bpshz:.3f} case {mid.case}: MCE {stats.mce:.3e} >= 0.95 x PCRB {stats.pcrb_ref:.3e} "
           f"(ratio {stats.mce_over_pcrb:.1f}), MCE <= MSE on {sum(m <= s for m, s in zip(stats.batch_mce, stats.batch_mse))}"
           f"/10 batches, {elapsed:.0f} s <= 300 s")


def test_ac10_determinism(cfg, sweep_rows, report):
    again = run_sweep(cfg)
    a, b = to_csv(sweep_rows, include_timing=False), to_csv(again, include_timing=False)
    report("AC10 determinism", a == b and len(again) == len(sweep_rows),
           f"two default sweeps give {'identical' if a == b else 'different'} CSV ({len(a)} bytes)")
