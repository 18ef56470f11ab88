import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from isac_pcrb.prior import (
    QuadratureError,
    VonMisesMixture,
    bessel_ratio,
    periodic_trapezoid,
    von_mises_variates,
    wrap_angle,
)

SCENE = VonMisesMixture([(-1.2, 300.0, 0.54), (-0.6, 80.0, 0.46)])


def quad_score_energy(mix):
    """Direct quadrature of E[(d/dtheta ln p)^2] with breakpoints at the means."""
    def f(t):
        return mix.score(np.array([t]))[0] ** 2 * mix.pdf(np.array([t]))[0]
    pts = sorted(set(float(m) for m in wrap_angle(mix.means)))
    val, _ = integrate.quad(f, -np.pi, np.pi, points=pts, limit=2000, epsabs=0, epsrel=1e-11)
    return val


def random_mixture(rng):
    k = int(rng.integers(1, 4))
    w = rng.dirichlet(np.ones(k))
    w[-1] = 1.0 - w[:-1].sum()
    return VonMisesMixture.from_arrays(rng.uniform(-np.pi, np.pi, k), rng.uniform(0.1, 500.0, k), w)


def test_single_component_matches_scipy():
    mix = VonMisesMixture([(0.4, 7.5, 1.0)])
    th = np.linspace(-np.pi, np.pi, 101)
    np.testing.assert_allclose(mix.pdf(th), stats.vonmises.pdf(th, 7.5, loc=0.4), rtol=1e-12)
    assert mix.rho() == 0.0


def test_density_integrates_to_one():
    val, _ = integrate.quad(lambda t: SCENE.pdf(np.array([t]))[0], -np.pi, np.pi, points=[-1.2, -0.6], limit=500)
    assert val == pytest.approx(1.0, abs=1e-10)


def test_score_is_log_density_derivative():
    th = np.linspace(-2.0, 0.5, 41)
    h = 1e-6
    fd = (SCENE.log_pdf(th + h) - SCENE.log_pdf(th - h)) / (2 * h)
    np.testing.assert_allclose(SCENE.score(th), fd, rtol=1e-6, atol=1e-5)


def test_score_energy_scene():
    assert SCENE.score_energy() == pytest.approx(quad_score_energy(SCENE), rel=1e-8)


def test_score_energy_random_mixtures():
    rng = np.random.default_rng(5)
    for _ in range(15):
        mix = random_mixture(rng)
        assert mix.score_energy() == pytest.approx(quad_score_energy(mix), rel=1e-6)


def test_single_component_score_energy_closed_form():
    for k in (0.1, 3.0, 300.0, 5000.0):
        mix = VonMisesMixture([(1.0, k, 1.0)])
        assert mix.score_energy() == pytest.approx(k * bessel_ratio(k), rel=1e-14)


def test_bessel_ratio_large_argument_no_overflow():
    r = bessel_ratio(np.array([1e3, 1e5, 1e8]))
    assert np.all(np.isfinite(r))
    # asymptotic 1 - 1/(2k)
    assert r[1] == pytest.approx(1 - 0.5e-5, rel=1e-9)
    with pytest.raises(ValueError):
        bessel_ratio(0.0)


def test_mode_of_scene():
    assert SCENE.mode() == pytest.approx(-1.2, abs=2 * np.pi / 2**16)


@pytest.mark.parametrize(
    "comps, msg",
    [([(0, 1.0, 0.5)], "sum"), ([(0, -1.0, 1.0)], "concentration"), ([], "at least one"),
     ([(0, 1.0, 1.2), (0, 1.0, -0.2)], "weights")],
)
def test_mixture_validation(comps, msg):
    with pytest.raises(ValueError, match=msg):
        VonMisesMixture(comps)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 6), st.integers(1, 12))
def test_trapezoid_exact_for_trig_polynomials(n_start_exp, degree):
    f = lambda t: (np.cos(degree * t) + 1.0) ** 2
    # integral of (cos m t + 1)^2 over a period is 3 pi
    val = periodic_trapezoid(f, n_start=2**n_start_exp + 2 * degree + 1)
    assert val == pytest.approx(3 * np.pi, rel=1e-12)


def test_trapezoid_vector_valued_and_failure():
    v = periodic_trapezoid(lambda t: np.stack([np.cos(t) ** 2, np.ones_like(t)], axis=1))
    np.testing.assert_allclose(v, [np.pi, 2 * np.pi])
    with pytest.raises(QuadratureError):
        periodic_trapezoid(lambda t: np.abs(t) ** 0.5 * np.sign(t), rtol=1e-15, n_start=16, n_max=64)


@pytest.mark.parametrize("kappa", [0.05, 1.0, 30.0, 2000.0])
def test_sampler_matches_distribution(kappa):
    rng = np.random.default_rng(11)
    x = von_mises_variates(0.0, kappa, 20000, rng)
    res = stats.kstest(x, lambda t: stats.vonmises.cdf(t, kappa))
    assert res.pvalue > 1e-3


def test_mixture_sample_proportions():
    x = SCENE.sample(3, size=40000)
    assert x.shape == (40000,)
    near_first = np.mean(np.abs(x + 1.2) < 0.2)
    assert near_first == pytest.approx(0.54, abs=0.015)
    assert SCENE.sample(3) == SCENE.sample(3)


@settings(max_examples=50, deadline=None)
@given(st.floats(-1e3, 1e3, allow_nan=False))
def test_wrap_angle_range(t):
    w = wrap_angle(t)
    assert -np.pi <= w < np.pi
    assert np.cos(w) == pytest.approx(np.cos(t), abs=1e-9)


def test_rho_converges_for_well_separated_components():
    # the cross term is ~1e-67 here; it must still converge to a nonnegative value
    mix = VonMisesMixture([(-1.06576, 444.665, 0.884921), (1.76161, 116.993, 0.115079)])
    assert 0.0 <= mix.rho() < 1e-60
    assert mix.score_energy() == pytest.approx(quad_score_energy(mix), rel=1e-10)
