"""Uniform planar array steering vectors and the BS-target / BS-user channels.

Antenna ``n`` (1-based in the usual array formulas) is stored at index
``n - 1``.  Row index is ``(n-1) // cols`` and column index ``(n-1) % cols``.
All angles are radians.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class UpaGeometry:
    tx_rows: int
    tx_cols: int
    rx_rows: int
    rx_cols: int
    spacing_over_wavelength: float = 0.5
    bs_height: float = 0.0

    def __post_init__(self):
        for name in ("tx_rows", "tx_cols", "rx_rows", "rx_cols"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if not self.spacing_over_wavelength > 0:
            raise ValueError("spacing_over_wavelength must be > 0")
        if self.bs_height < 0:
            raise ValueError("bs_height must be >= 0")

    @property
    def n_tx(self) -> int:
        return self.tx_rows * self.tx_cols

    @property
    def n_rx(self) -> int:
        return self.rx_rows * self.rx_cols


@dataclass(frozen=True)
class SceneAngles:
    """Known elevation and the derived phase scale ``-pi (d/lambda) cos(elevation)``.

    Frozen, so the phase scale can never go stale; build a new instance with
    :meth:`from_range` or :meth:`from_elevation` when the elevation changes.
    """

    elevation: float
    phase_scale: float
    range: float | None = field(default=None)

    @classmethod
    def from_elevation(cls, geom: UpaGeometry, elevation: float, range: float | None = None):
        delta = -np.pi * geom.spacing_over_wavelength * np.cos(elevation)
        return cls(float(elevation), float(delta), range)

    @classmethod
    def from_range(cls, geom: UpaGeometry, range: float, target_height: float = 0.0):
        if range <= 0:
            raise ValueError("range must be > 0")
        ratio = (target_height - geom.bs_height) / range
        if abs(ratio) > 1:
            raise ValueError(
                f"height difference {target_height - geom.bs_height} m exceeds range {range} m"
            )
        return cls.from_elevation(geom, float(np.arcsin(ratio)), range)


def _index_coeffs(rows: int, cols: int) -> tuple[np.ndarray, np.ndarray]:
    n = np.arange(rows * cols)
    cx = rows - 2 * (n // cols) - 1
    cy = cols - 2 * (n % cols) - 1
    return cx.astype(float), cy.astype(float)


def _steering(rows, cols, delta, theta):
    cx, cy = _index_coeffs(rows, cols)
    theta = np.asarray(theta, dtype=float)
    c = np.cos(theta)[..., None]
    s = np.sin(theta)[..., None]
    return np.exp(1j * delta * (cx * c + cy * s))


def _steering_deriv(rows, cols, delta, theta):
    cx, cy = _index_coeffs(rows, cols)
    theta = np.asarray(theta, dtype=float)
    c = np.cos(theta)[..., None]
    s = np.sin(theta)[..., None]
    phase = delta * (cx * c + cy * s)
    return 1j * delta * (cy * c - cx * s) * np.exp(1j * phase)


def steering_tx(geom: UpaGeometry, angles: SceneAngles, theta):
    """Transmit steering vector(s); ``theta`` may be an array, giving shape ``(..., N_t)``."""
    return _steering(geom.tx_rows, geom.tx_cols, angles.phase_scale, theta)


def steering_rx(geom: UpaGeometry, angles: SceneAngles, theta):
    return _steering(geom.rx_rows, geom.rx_cols, angles.phase_scale, theta)


def steering_tx_deriv(geom: UpaGeometry, angles: SceneAngles, theta):
    """Derivative of :func:`steering_tx` with respect to azimuth."""
    return _steering_deriv(geom.tx_rows, geom.tx_cols, angles.phase_scale, theta)


def steering_rx_deriv(geom: UpaGeometry, angles: SceneAngles, theta):
    return _steering_deriv(geom.rx_rows, geom.rx_cols, angles.phase_scale, theta)


def target_channel(geom: UpaGeometry, angles: SceneAngles, theta: float, alpha: complex) -> np.ndarray:
    """Round-trip channel ``alpha * b(theta) a(theta)^H`` of shape ``(N_r, N_t)``."""
    a = steering_tx(geom, angles, theta)
    b = steering_rx(geom, angles, theta)
    return alpha * np.outer(b, a.conj())


@dataclass(frozen=True)
class UserLocation:
    height: float
    azimuth: float
    range: float


def user_channel(geom: UpaGeometry, user: UserLocation, beta0: float) -> np.ndarray:
    """One-way LoS channel ``h`` to the user: ``sqrt(beta0)/r_U * a(phi_U, theta_U)``.

    The user's elevation uses the signed height difference to the BS, and the
    phase scale is recomputed from it.
    """
    if user.range <= 0:
        raise ValueError("user range must be > 0")
    angles = SceneAngles.from_range(geom, user.range, target_height=user.height)
    return np.sqrt(beta0) / user.range * steering_tx(geom, angles, user.azimuth)
