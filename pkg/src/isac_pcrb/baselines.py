"""Benchmark beamforming schemes used as comparison curves for the proposed design."""
from __future__ import annotations

from dataclasses import replace

import numpy as np

from .beamopt import (
    DEFAULT_TOL,
    BeamformingError,
    BeamSolution,
    ConvexInstance,
    Tolerances,
    _align_phase,
    _finalize,
    kkt_residuals,
    numerical_rank,
    purify,
    rate,
    recover_certificate,
    restore_rate,
    solve_beamforming,
    solve_relaxation,
)
from .fisher import pcrb_from_gain, point_mass_matrices, sensing_gain
from .geometry import SceneAngles, UpaGeometry
from .prior import VonMisesMixture

RANDOMIZATION_SAMPLES = 1000


class NoFeasibleSampleError(BeamformingError):
    """Gaussian randomization produced no beam meeting the rate target."""


def sensing_oriented(inst: ConvexInstance, tol: Tolerances = DEFAULT_TOL, **kwargs) -> BeamSolution:
    """Spend the whole budget on the sensing objective and ignore the user.

    The relaxation without a rate constraint is solved by ``P q1 q1^H`` with
    ``q1`` the top eigenvector of ``D*``.  That beam is returned as ``w`` so
    the rate it happens to deliver at the user can be reported.
    """
    sol = solve_relaxation(inst, rate_constraint=False, tol=tol, **kwargs)
    cert = recover_certificate(sol, inst.mat, tol)
    beams = purify(sol, cert, inst, "I", tol)
    kkt = kkt_residuals(sol, cert, inst)
    beams.kkt_residual = kkt["max"]
    beams.notes["kkt"] = kkt
    beams.rank_rc = numerical_rank(sol.R_C, inst.power, tol.cluster)
    beams.rank_rs = numerical_rank(sol.R_S, inst.power, tol.cluster)
    beams.solve_time = sol.solve_time
    beams.status = sol.status
    return beams


def _randomize(R_C, inst: ConvexInstance, rng, n_samples: int):
    """Best of ``n_samples`` Gaussian draws from ``R_C`` scaled to full power."""
    vals, vecs = np.linalg.eigh(0.5 * (R_C + R_C.conj().T))
    root = vecs * np.sqrt(np.maximum(vals, 0.0))
    n = R_C.shape[0]
    g = (rng.standard_normal((n, n_samples)) + 1j * rng.standard_normal((n, n_samples))) / np.sqrt(2)
    xi = root @ g
    xi *= np.sqrt(inst.power) / np.linalg.norm(xi, axis=0)
    snr = np.abs(inst.channel.conj() @ xi) ** 2 / inst.noise_power
    ok = np.flatnonzero(snr >= inst.snr_floor)
    if ok.size == 0:
        raise NoFeasibleSampleError(f"none of {n_samples} randomized beams meets the rate target")
    best, best_gain = None, -np.inf
    for k in ok:
        w = xi[:, k]
        gain = sensing_gain(inst.mat, np.outer(w, w.conj()))
        if gain > best_gain:
            best, best_gain = w, gain
    return best, int(ok.size)


def dual_functional(
    inst: ConvexInstance,
    tol: Tolerances = DEFAULT_TOL,
    rng=0,
    n_samples: int = RANDOMIZATION_SAMPLES,
    **kwargs,
) -> BeamSolution:
    """Communication beam only (no dedicated sensing beams).

    A rank-one relaxed ``R_C`` is used directly; otherwise the best of
    ``n_samples`` Gaussian randomizations is kept and the objective gap to
    the relaxation is recorded in ``notes["relaxation_gap"]``.
    """
    sol = solve_relaxation(inst, sensing_beams=False, tol=tol, **kwargs)
    P = inst.power
    rank = numerical_rank(sol.R_C, P, tol.cluster)
    notes = {}
    if rank <= 1:
        vals, vecs = np.linalg.eigh(sol.R_C)
        w = np.sqrt(max(vals[-1], 0.0)) * vecs[:, -1]
        w, _, _, tau_w = restore_rate(w, [], inst.channel, inst.noise_power, inst.rate_target)
        notes["rate_restore"] = (0.0, tau_w)
    else:
        w, n_ok = _randomize(sol.R_C, inst, np.random.default_rng(rng), n_samples)
        notes["randomization_feasible"] = n_ok
    w = _align_phase(w, inst.channel)
    beams = BeamSolution(w=w, S=[], pcrb=float("nan"), rate=float("nan"), case_label="",
                         relaxed_t=sol.t, purification_applied=rank > 1, notes=notes)
    _finalize(beams, inst)
    beams.notes["relaxation_gap"] = (sol.t - beams.gain) / abs(sol.t)
    try:
        cert = recover_certificate(sol, inst.mat, tol)
        beams.kkt_residual = kkt_residuals(sol, cert, inst)["max"]
    except BeamformingError:
        beams.kkt_residual = float("nan")
    beams.rank_rc = rank
    beams.rank_rs = 0
    beams.solve_time = sol.solve_time
    beams.status = sol.status if rank <= 1 else f"{sol.status}+randomized"
    return beams


def most_probable_angle(
    inst: ConvexInstance,
    geom: UpaGeometry,
    angles: SceneAngles,
    prior: VonMisesMixture,
    tol: Tolerances = DEFAULT_TOL,
    **kwargs,
) -> BeamSolution:
    """Design for the single most likely angle, then score under the full prior.

    The sensing matrices collapse to one quadrature node at the prior mode and
    carry no prior information.  The returned ``pcrb`` uses the true
    prior-averaged matrices held by ``inst``.
    """
    theta_max = prior.mode()
    point = point_mass_matrices(geom, angles, theta_max, prior_fisher=0.0)
    design = replace(inst, mat=point)
    beams = solve_beamforming(design, tol, **kwargs)
    beams.notes["theta_max"] = theta_max
    beams.notes["design_pcrb"] = beams.pcrb
    beams.gain = sensing_gain(inst.mat, beams.covariance)
    beams.pcrb = pcrb_from_gain(beams.gain, inst.mat.prior_fisher, inst.link.gain)
    beams.rate = rate(inst.channel, beams.w, beams.S, inst.noise_power)
    return beams


__all__ = [
    "NoFeasibleSampleError",
    "RANDOMIZATION_SAMPLES",
    "dual_functional",
    "most_probable_angle",
    "sensing_oriented",
]
