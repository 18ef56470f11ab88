"""Von Mises mixture prior on the target azimuth.

Everything is evaluated with exponentially scaled Bessel functions so that
concentrations in the hundreds or thousands never overflow.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import special

TWO_PI = 2.0 * np.pi


class QuadratureError(RuntimeError):
    """Raised when node doubling fails to reach the requested tolerance."""


def wrap_angle(theta):
    """Map angles to ``[-pi, pi)``."""
    return np.mod(np.asarray(theta, dtype=float) + np.pi, TWO_PI) - np.pi


def periodic_trapezoid(
    func: Callable[[np.ndarray], np.ndarray],
    rtol: float = 1e-8,
    n_start: int = 4096,
    n_max: int = 2**22,
) -> np.ndarray:
    """Integrate a 2*pi-periodic function over ``[-pi, pi)``.

    ``func`` maps an array of ``n`` nodes to an array whose leading axis has
    length ``n``; the integral is taken along that axis.  The node count is
    doubled (re-using previous nodes) until two successive estimates agree to
    ``rtol`` in max-norm relative to the latest estimate.
    """
    n = int(n_start)
    nodes = -np.pi + TWO_PI * np.arange(n) / n
    total = np.sum(func(nodes), axis=0)
    estimate = total * (TWO_PI / n)
    while True:
        if 2 * n > n_max:
            raise QuadratureError(f"periodic trapezoid did not converge with {n} nodes")
        mids = -np.pi + TWO_PI * (np.arange(n) + 0.5) / n
        total = total + np.sum(func(mids), axis=0)
        n *= 2
        refined = total * (TWO_PI / n)
        scale = np.max(np.abs(refined))
        change = np.max(np.abs(refined - estimate))
        estimate = refined
        if change <= rtol * scale or scale == 0.0:
            return estimate


def scaled_bessel_i0(kappa):
    """``exp(-kappa) * I_0(kappa)``."""
    return special.i0e(kappa)


def bessel_ratio(kappa):
    """``I_1(kappa) / I_0(kappa)`` for ``kappa > 0``, overflow-free."""
    kappa = np.asarray(kappa, dtype=float)
    if np.any(kappa <= 0):
        raise ValueError("bessel_ratio requires kappa > 0")
    out = special.i1e(kappa) / special.i0e(kappa)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class VonMisesComponent:
    mean: float
    concentration: float
    weight: float


class VonMisesMixture:
    """Weighted sum of von Mises densities on the circle."""

    def __init__(self, components: Sequence[VonMisesComponent | tuple]):
        comps = [c if isinstance(c, VonMisesComponent) else VonMisesComponent(*c) for c in components]
        if not comps:
            raise ValueError("a mixture needs at least one component")
        self.components = tuple(comps)
        self.means = np.array([c.mean for c in comps], dtype=float)
        self.kappas = np.array([c.concentration for c in comps], dtype=float)
        self.weights = np.array([c.weight for c in comps], dtype=float)
        if np.any(self.kappas <= 0):
            raise ValueError("concentrations must be > 0")
        if np.any((self.weights < 0) | (self.weights > 1)):
            raise ValueError("weights must lie in [0, 1]")
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {self.weights.sum()!r}, expected 1")
        # log of the normalizer 2*pi*I0(kappa), in scaled form
        self._log_norm = np.log(TWO_PI * special.i0e(self.kappas)) + self.kappas

    @classmethod
    def from_arrays(cls, means, concentrations, weights):
        return cls([VonMisesComponent(float(m), float(k), float(w))
                    for m, k, w in zip(means, concentrations, weights)])

    def __len__(self):
        return len(self.components)

    def __repr__(self):
        parts = ", ".join(f"({c.mean:g}, {c.concentration:g}, {c.weight:g})" for c in self.components)
        return f"VonMisesMixture([{parts}])"

    def _component_logs(self, theta):
        theta = np.asarray(theta, dtype=float)[..., None]
        with np.errstate(divide="ignore"):
            logw = np.log(self.weights)
        return logw + self.kappas * np.cos(theta - self.means) - self._log_norm

    def log_pdf(self, theta):
        return special.logsumexp(self._component_logs(theta), axis=-1)

    def pdf(self, theta):
        """Density of the (2*pi-periodic) mixture at ``theta``."""
        return np.exp(self.log_pdf(theta))

    def responsibilities(self, theta):
        """Posterior component weights ``p_k f_k / sum_j p_j f_j`` at each ``theta``."""
        logs = self._component_logs(theta)
        return np.exp(logs - special.logsumexp(logs, axis=-1, keepdims=True))

    def score(self, theta):
        """Derivative of the log density with respect to ``theta``."""
        theta = np.asarray(theta, dtype=float)
        s = -self.kappas * np.sin(theta[..., None] - self.means)
        return np.sum(self.responsibilities(theta) * s, axis=-1)

    def mode(self, grid_size: int = 2**16) -> float:
        """Grid argmax of the density; ties go to the smaller angle."""
        grid = -np.pi + TWO_PI * np.arange(grid_size) / grid_size
        i = int(np.argmax(self.log_pdf(grid)))
        return float(grid[i])

    def rho(self, rtol: float = 1e-8) -> float:
        """The cross-component correction in the closed form of the score energy.

        The double sum over component pairs collapses to
        ``p(theta) * Var_w[kappa_k sin(theta - theta_k)]`` with ``w`` the
        component responsibilities.
        """

        def integrand(theta):
            dens = self.pdf(theta)
            resp = self.responsibilities(theta)
            s = self.kappas * np.sin(theta[:, None] - self.means)
            # pairwise form of the weighted variance; E[s^2] - E[s]^2 cancels
            # catastrophically when the components barely overlap
            var = np.zeros_like(dens)
            for k, l in zip(*np.triu_indices(len(self), 1)):
                var += resp[:, k] * resp[:, l] * (s[:, k] - s[:, l]) ** 2
            out = dens * var
            # numerator underflows at least as fast as the density
            out[dens < 1e-300] = 0.0
            return out

        if len(self) == 1:
            return 0.0
        return float(periodic_trapezoid(integrand, rtol=rtol))

    def score_energy(self, rtol: float = 1e-8) -> float:
        """Prior Fisher information ``E[(d/dtheta ln p)^2]`` in closed form."""
        first = float(np.sum(self.weights * self.kappas * bessel_ratio(self.kappas)))
        return first - self.rho(rtol)

    def sample(self, rng=None, size=None):
        """Draw angles in ``[-pi, pi)``.

        ``rng`` is a :class:`numpy.random.Generator` or a seed.
        """
        rng = np.random.default_rng(rng)
        n = 1 if size is None else int(np.prod(size))
        ks = rng.choice(len(self), size=n, p=self.weights)
        out = np.empty(n)
        for k in range(len(self)):
            idx = np.flatnonzero(ks == k)
            if idx.size:
                out[idx] = von_mises_variates(self.means[k], self.kappas[k], idx.size, rng)
        out = wrap_angle(out)
        if size is None:
            return float(out[0])
        return out.reshape(size)


def von_mises_variates(mean: float, kappa: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Best-Fisher rejection sampler for a single von Mises component."""
    if kappa <= 0:
        raise ValueError("kappa must be > 0")
    # tau - sqrt(2 tau) written without cancellation for small kappa
    root = np.sqrt(1.0 + 4.0 * kappa * kappa)
    tau = 1.0 + root
    tau_m2 = 4.0 * kappa * kappa / (root + 1.0)
    rho = tau * tau_m2 / (tau + np.sqrt(2.0 * tau)) / (2.0 * kappa)
    r = (1.0 + rho * rho) / (2.0 * rho)

    out = np.empty(n)
    filled = 0
    while filled < n:
        m = max(2 * (n - filled), 16)
        u1, u2, u3 = rng.random((3, m))
        z = np.cos(np.pi * u1)
        f = (1.0 + r * z) / (r + z)
        c = kappa * (r - f)
        with np.errstate(divide="ignore", invalid="ignore"):
            ok = (c * (2.0 - c) - u2 > 0) | (np.log(c / u2) + 1.0 - c >= 0)
        f = np.clip(f[ok], -1.0, 1.0)
        th = np.sign(u3[ok] - 0.5) * np.arccos(f)
        take = min(th.size, n - filled)
        out[filled:filled + take] = th[:take]
        filled += take
    return mean + out
