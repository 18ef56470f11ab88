"""Prior-averaged sensing matrices, Fisher information blocks and the periodic PCRB."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import (
    SceneAngles,
    UpaGeometry,
    steering_rx_deriv,
    steering_tx,
    steering_tx_deriv,
)
from .prior import VonMisesMixture, periodic_trapezoid


class SingularFimError(ValueError):
    pass


def hermitian_part(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.conj().T)


@dataclass(frozen=True)
class SensingMatrices:
    A1: np.ndarray
    A2: np.ndarray
    A3: np.ndarray
    prior_fisher: float

    @property
    def n_tx(self) -> int:
        return self.A1.shape[0]


@dataclass(frozen=True)
class SensingLinkBudget:
    alpha: complex
    symbols: int
    noise_power: float

    def __post_init__(self):
        if self.symbols < 1:
            raise ValueError("symbols must be >= 1")
        if not self.noise_power > 0:
            raise ValueError("noise_power must be > 0")

    @property
    def gain(self) -> float:
        """``2 |alpha|^2 L / sigma_S^2``, the factor in front of the observation FIM."""
        return 2.0 * abs(self.alpha) ** 2 * self.symbols / self.noise_power


def _stack(geom, angles, theta, weights):
    """Weighted per-node contributions to (A1, A2, A3), stacked on a leading axis."""
    a = steering_tx(geom, angles, theta)
    ad = steering_tx_deriv(geom, angles, theta)
    bd2 = np.sum(np.abs(steering_rx_deriv(geom, angles, theta)) ** 2, axis=-1)
    nr = geom.n_rx
    aa = a[:, :, None] * a[:, None, :].conj()
    dd = ad[:, :, None] * ad[:, None, :].conj()
    da = ad[:, :, None] * a[:, None, :].conj()
    w = weights[:, None, None]
    a1 = w * (bd2[:, None, None] * aa + nr * dd)
    a2 = w * nr * da
    a3 = w * nr * aa
    return np.stack([a1, a2, a3], axis=1)


def assemble_matrices(
    geom: UpaGeometry,
    angles: SceneAngles,
    prior: VonMisesMixture,
    rtol: float = 1e-8,
    n_start: int = 4096,
) -> SensingMatrices:
    """Average the steering outer products over the prior by periodic quadrature.

    A1, A2 and A3 share one grid, so all three come from the same
    discretization level.
    """

    def integrand(theta):
        return _stack(geom, angles, theta, prior.pdf(theta))

    a1, a2, a3 = periodic_trapezoid(integrand, rtol=rtol, n_start=n_start)
    return SensingMatrices(hermitian_part(a1), a2, hermitian_part(a3), prior.score_energy(rtol))


def point_mass_matrices(
    geom: UpaGeometry, angles: SceneAngles, theta: float, prior_fisher: float = 0.0
) -> SensingMatrices:
    """Sensing matrices for a prior concentrated on a single angle."""
    a1, a2, a3 = _stack(geom, angles, np.array([float(theta)]), np.ones(1))[0]
    return SensingMatrices(hermitian_part(a1), a2, hermitian_part(a3), float(prior_fisher))


def _tr(a, r):
    return np.sum(a * r.T)


def traces(mat: SensingMatrices, R: np.ndarray) -> tuple[float, complex, float]:
    """``(tr(A1 R), tr(A2 R), tr(A3 R))``; the first and last are real for Hermitian R."""
    return _tr(mat.A1, R).real, complex(_tr(mat.A2, R)), _tr(mat.A3, R).real


def fim_blocks(mat: SensingMatrices, link: SensingLinkBudget, R: np.ndarray):
    """Observation FIM blocks over ``[theta, Re alpha, Im alpha]``.

    Returns ``(J_tt, J_ta, J_aa)`` with ``J_ta`` of shape ``(2,)`` and ``J_aa``
    of shape ``(2, 2)``.
    """
    t1, t2, t3 = traces(mat, R)
    c = 2.0 * link.symbols / link.noise_power
    j_tt = c * abs(link.alpha) ** 2 * t1
    v = t2 * link.alpha
    j_ta = c * np.array([v.real, (v * 1j).real])
    j_aa = c * t3 * np.eye(2)
    return j_tt, j_ta, j_aa


def fim_matrix(mat: SensingMatrices, link: SensingLinkBudget, R: np.ndarray) -> np.ndarray:
    """Full 3x3 periodic posterior FIM (observation part plus prior score energy)."""
    j_tt, j_ta, j_aa = fim_blocks(mat, link, R)
    F = np.zeros((3, 3))
    F[0, 0] = j_tt + mat.prior_fisher
    F[0, 1:] = j_ta
    F[1:, 0] = j_ta
    F[1:, 1:] = j_aa
    return F


def sensing_gain(mat: SensingMatrices, R: np.ndarray) -> float:
    """``tr(A1 R) - |tr(A2 R)|^2 / tr(A3 R)``; the PCRB falls as this grows."""
    t1, t2, t3 = traces(mat, R)
    if not t3 > 0:
        raise SingularFimError("tr(A3 R) must be positive")
    return t1 - abs(t2) ** 2 / t3


def mce_bound(inv_fim_11):
    """Map the (1,1) entry of the inverse FIM to the mean-cyclic-error bound."""
    return 2.0 - 2.0 / np.sqrt(1.0 + inv_fim_11)


def pcrb_from_gain(gain: float, prior_fisher: float, link_gain: float) -> float:
    info = prior_fisher + link_gain * gain
    if not info > 0:
        raise SingularFimError("Fisher information for theta is zero")
    return float(mce_bound(1.0 / info))


def pcrb_periodic(mat: SensingMatrices, link: SensingLinkBudget, R: np.ndarray) -> float:
    """Periodic PCRB of the mean-cyclic error for transmit covariance ``R``."""
    if not np.any(R):
        if not mat.prior_fisher > 0:
            raise SingularFimError("zero transmit covariance and zero prior information")
        return float(mce_bound(1.0 / mat.prior_fisher))
    return pcrb_from_gain(sensing_gain(mat, R), mat.prior_fisher, link.gain)
