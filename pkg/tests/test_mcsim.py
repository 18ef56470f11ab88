import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from isac_pcrb.beamopt import solve_beamforming
from isac_pcrb.geometry import target_channel
from isac_pcrb.mcsim import (
    DegenerateInputError,
    EchoBatch,
    SensingScenario,
    cyclic_error,
    map_estimate,
    run_trials,
    simulate_echo,
    transmit_block,
)
from isac_pcrb.prior import VonMisesMixture


@pytest.fixture(scope="module")
def beams(inst):
    b = solve_beamforming(inst.with_rate(6.0))
    return b.w, b.S


def test_noiseless_echo_is_exact(scenario, beams):
    alpha = 0.3 + 0.4j
    batch = simulate_echo(scenario.geom, scenario.angles, beams, (-0.9, alpha), 25, 0.0, 1)
    G = target_channel(scenario.geom, scenario.angles, -0.9, alpha)
    np.testing.assert_allclose(batch.Y, G @ batch.X, atol=1e-15)


def test_sample_covariance_of_transmit_block(beams):
    w, S = beams
    X = transmit_block(w, S, 100_000, np.random.default_rng(4))
    R = np.outer(w, w.conj()) + sum(np.outer(s, s.conj()) for s in S)
    emp = X @ X.conj().T / X.shape[1]
    assert np.linalg.norm(emp - R) <= 0.02 * np.linalg.norm(R)


def test_echo_reproducible(scenario, beams):
    a = simulate_echo(scenario.geom, scenario.angles, beams, (0.1, 1e-6), 5, 1e-12, 9)
    b = simulate_echo(scenario.geom, scenario.angles, beams, (0.1, 1e-6), 5, 1e-12, 9)
    np.testing.assert_array_equal(a.Y, b.Y)
    with pytest.raises(ValueError):
        simulate_echo(scenario.geom, scenario.angles, beams, (0.1, 1.0), 0, 1.0, 9)


@pytest.mark.parametrize("theta", [-1.2, -0.75, 0.4, 3.1])
def test_noiseless_map_recovers_truth(scenario, beams, theta):
    alpha = 2e-6 * np.exp(0.7j)
    batch = simulate_echo(scenario.geom, scenario.angles, beams, (theta, alpha), 25, 0.0, 2)
    th, a = map_estimate(batch, scenario.prior)
    assert abs(np.angle(np.exp(1j * (th - theta)))) < 1e-6
    assert a == pytest.approx(alpha, rel=1e-5)


def test_sharp_prior_dominates_pure_noise(scenario, beams):
    sharp = VonMisesMixture([(0.77, 1e6, 1.0)])
    batch = simulate_echo(scenario.geom, scenario.angles, beams, (-1.0, 0.0), 25, 1e-12, 3)
    th, _ = map_estimate(batch, sharp)
    assert th == pytest.approx(0.77, abs=1e-3)


def test_zero_transmit_is_degenerate(scenario):
    n = scenario.geom.n_tx
    batch = EchoBatch(np.zeros((n, 4), complex), np.zeros((scenario.geom.n_rx, 4), complex), 0.0, 1.0,
                      scenario.geom, scenario.angles, 1.0)
    with pytest.raises(DegenerateInputError):
        map_estimate(batch, scenario.prior)
    with pytest.raises(ValueError):
        map_estimate(batch, scenario.prior, grid_size=100)


def test_perfect_estimator_gives_zero_error(scenario, beams, mat):
    sc = SensingScenario(scenario.geom, scenario.angles, scenario.prior, scenario.link, mat)
    stats = run_trials(sc, beams, 20, rng=1, estimator=lambda b: b.theta)
    assert stats.mce == pytest.approx(0.0, abs=1e-15) and stats.mse == 0.0
    assert stats.pcrb_ref > 0


def test_antipodal_wrap():
    ce = cyclic_error(-np.pi + 0.01, np.pi - 0.01)
    assert ce == pytest.approx(2 - 2 * np.cos(0.02))
    assert ce < 4.1e-4
    assert (-np.pi + 0.01 - (np.pi - 0.01)) ** 2 == pytest.approx((2 * np.pi - 0.02) ** 2)


@settings(max_examples=200, deadline=None)
@given(st.floats(-50, 50, allow_nan=False))
def test_cyclic_error_below_squared_error(eps):
    assert cyclic_error(eps, 0.0) <= eps * eps + 1e-12


def test_trials_reproducible_and_ordered(scenario, beams, mat):
    sc = SensingScenario(scenario.geom, scenario.angles, scenario.prior, scenario.link, mat)
    a = run_trials(sc, beams, 30, rng=5, grid_size=1024, batches=3)
    b = run_trials(sc, beams, 30, rng=5, grid_size=1024, batches=3)
    assert a == b
    assert a.mce <= a.mse + 1e-12
    assert all(m <= s + 1e-12 for m, s in zip(a.batch_mce, a.batch_mse))
    with pytest.raises(ValueError):
        run_trials(sc, beams, 0)
