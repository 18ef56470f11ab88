"""Optimal ISAC transmit beamforming through semidefinite relaxation.

The relaxed problem maximizes ``t`` over ``(t, R_C, R_S)`` subject to

* the 2x2 Hermitian LMI ``B(t, R_C, R_S) >= 0`` (Schur form of ``g(R) >= t``),
* the SINR floor ``h^H R_C h >= gamma (sigma_C^2 + h^H R_S h)``,
* the power budget ``tr(R_C + R_S) <= P`` and ``R_C, R_S >= 0``.

Complex Hermitian cones are handed to the solver through the real embedding
``M -> [[Re M, -Im M], [Im M, Re M]]``.  The dual of the LMI yields ``Z_B``,
whose normalized off-diagonal entry defines the certificate matrix ``D*``;
its spectrum together with the rate multiplier decides whether the optimum
needs zero or one dedicated sensing beam, and the rank-one beams are then
rebuilt from the relaxed optimum.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .fisher import SensingLinkBudget, SensingMatrices, hermitian_part, pcrb_from_gain, sensing_gain, traces


class BeamformingError(RuntimeError):
    pass


class InfeasibleInstanceError(BeamformingError):
    pass


class SolverError(BeamformingError):
    def __init__(self, message, status=None):
        super().__init__(message)
        self.status = status


class DualityGapError(SolverError):
    pass


class DegenerateDualError(BeamformingError):
    pass


class TightnessError(BeamformingError):
    pass


@dataclass(frozen=True)
class Tolerances:
    feas: float = 1e-7
    kkt: float = 1e-6
    cluster: float = 1e-6
    mu: float = 1e-7
    lam: float = 1e-6
    tight: float = 1e-6
    rate: float = 1e-9
    gap: float = 1e-6
    orth: float = 1e-4


DEFAULT_TOL = Tolerances()


def realify(m: np.ndarray) -> np.ndarray:
    """Real symmetric embedding of a complex matrix."""
    return np.block([[m.real, -m.imag], [m.imag, m.real]])


def unrealify_dual(y: np.ndarray) -> np.ndarray:
    """Complex Hermitian matrix ``Z`` with ``tr(Y realify(R)) = Re tr(Z R)``.

    The two copies of each block in the embedding are merged, which also
    projects out any part of ``Y`` that the embedding cannot see.
    """
    n = y.shape[0] // 2
    y11, y12, y21, y22 = y[:n, :n], y[:n, n:], y[n:, :n], y[n:, n:]
    z = (y11 + y22) + 1j * (y21 - y12)
    return 0.5 * (z + z.conj().T)


def rate(h: np.ndarray, w: np.ndarray | None, S, noise_power: float) -> float:
    """Achievable rate in bps/Hz with sensing beams as worst-case Gaussian interference."""
    if not noise_power > 0:
        raise ValueError("noise_power must be > 0")
    signal = 0.0 if w is None else abs(np.vdot(h, w)) ** 2
    interference = sum(abs(np.vdot(h, s)) ** 2 for s in (S or []))
    return float(np.log2(1.0 + signal / (interference + noise_power)))


@dataclass(frozen=True)
class ConvexInstance:
    mat: SensingMatrices
    link: SensingLinkBudget
    channel: np.ndarray
    power: float
    noise_power: float
    rate_target: float

    def __post_init__(self):
        if not self.power > 0:
            raise ValueError("power must be > 0")
        if not self.noise_power > 0:
            raise ValueError("noise_power must be > 0")
        if self.rate_target < 0:
            raise ValueError("rate_target must be >= 0")

    @property
    def snr_floor(self) -> float:
        return 2.0 ** self.rate_target - 1.0

    @property
    def mrt_capacity(self) -> float:
        return float(np.log2(1.0 + self.power * np.linalg.norm(self.channel) ** 2 / self.noise_power))

    @property
    def feasible(self) -> bool:
        # a target of exactly the MRT capacity round-trips through log2 with an ulp of error
        best = self.power * np.linalg.norm(self.channel) ** 2
        return self.snr_floor * self.noise_power <= best * (1.0 + 1e-12)

    def with_rate(self, rate_target: float) -> "ConvexInstance":
        return replace(self, rate_target=float(rate_target))


@dataclass
class RelaxedSolution:
    t: float
    R_C: np.ndarray
    R_S: np.ndarray
    Z_B: np.ndarray
    mu_rate: float
    mu_power: float
    Z_C: np.ndarray
    Z_S: np.ndarray
    status: str
    dual_objective: float
    solve_time: float
    rate_constraint: bool = True
    sensing_beams: bool = True


@dataclass
class Certificate:
    z2: complex
    z1_raw: complex
    D_star: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    multiplicity: int

    @property
    def d1(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def V(self) -> np.ndarray:
        return self.eigenvectors[:, : self.multiplicity]

    @property
    def q1(self) -> np.ndarray:
        return self.eigenvectors[:, 0]


@dataclass
class BeamSolution:
    w: np.ndarray
    S: list
    pcrb: float
    rate: float
    case_label: str
    D_star: np.ndarray | None = None
    eigenvalues: np.ndarray | None = None
    multiplicity: int = 0
    purification_applied: bool = False
    relaxed_t: float = float("nan")
    gain: float = float("nan")
    rank_rc: int = 0
    rank_rs: int = 0
    kkt_residual: float = float("nan")
    solve_time: float = 0.0
    status: str = "optimal"
    notes: dict = field(default_factory=dict)

    @property
    def covariance(self) -> np.ndarray:
        R = np.outer(self.w, self.w.conj())
        for s in self.S:
            R = R + np.outer(s, s.conj())
        return R

    @property
    def total_power(self) -> float:
        return float(np.linalg.norm(self.w) ** 2 + sum(np.linalg.norm(s) ** 2 for s in self.S))

    @property
    def sensing_power(self) -> float:
        return float(sum(np.linalg.norm(s) ** 2 for s in self.S))


def hermitian_basis(n: int) -> np.ndarray:
    """Real basis of ``n x n`` Hermitian matrices, shape ``(n*n, n, n)``.

    Order: the ``n`` diagonal units, then for ``i < j`` the symmetric units
    ``e_i e_j^T + e_j e_i^T``, then ``j (e_i e_j^T - e_j e_i^T)``.
    """
    iu, ju = np.triu_indices(n, 1)
    m = iu.size
    E = np.zeros((n + 2 * m, n, n), dtype=complex)
    E[np.arange(n), np.arange(n), np.arange(n)] = 1.0
    k = n + np.arange(m)
    E[k, iu, ju] = 1.0
    E[k, ju, iu] = 1.0
    k = n + m + np.arange(m)
    E[k, iu, ju] = 1j
    E[k, ju, iu] = -1j
    return E


def _trace_coeffs(A: np.ndarray, E: np.ndarray) -> np.ndarray:
    # tr(A E_k) for every basis element
    return np.einsum("ij,kji->k", A, E)


def _solve_conic(inst, a_scale, rate_constraint, sensing_beams, formulation):
    """Assemble and solve the scaled relaxation with CVXOPT's cone solver."""
    import cvxopt
    from cvxopt import solvers

    n = inst.mat.n_tx
    P = inst.power
    hnorm2 = float(np.linalg.norm(inst.channel) ** 2)
    h = inst.channel / np.sqrt(hnorm2)
    sigma = inst.noise_power / (P * hnorm2)
    gamma = inst.snr_floor if rate_constraint else 0.0

    E = hermitian_basis(n)
    nb = E.shape[0]
    blocks = 2 if sensing_beams else 1
    nx = 1 + blocks * nb

    a1 = _trace_coeffs(inst.mat.A1 / a_scale, E).real
    c2 = _trace_coeffs(inst.mat.A2 / a_scale, E)
    a3 = _trace_coeffs(inst.mat.A3 / a_scale, E).real
    hv = np.einsum("i,kij,j->k", h.conj(), E, h).real
    tr = np.einsum("kii->k", E).real

    def tiled(v):
        return np.tile(v, blocks)

    # linear inequalities  G x <= hl : power, then rate
    G_rows = [np.concatenate([[0.0], tiled(tr)])]
    h_rows = [1.0]
    if rate_constraint:
        row = np.concatenate([[0.0], -hv, gamma * hv if sensing_beams else []])
        G_rows.append(row)
        h_rows.append(-gamma * sigma)
    Gl = np.array(G_rows)
    hl = np.array(h_rows)

    # R_C >= 0 and R_S >= 0 through the real embedding
    phiE = np.stack([realify(e) for e in E])  # (nb, 2n, 2n)
    psd_blocks = []
    for b in range(blocks):
        G = np.zeros((4 * n * n, nx))
        G[:, 1 + b * nb: 1 + (b + 1) * nb] = -phiE.reshape(nb, -1).T
        psd_blocks.append(G)

    # Schur LMI (or rotated cone): entries are linear in (t, R)
    x1 = np.concatenate([[-1.0], tiled(a1)])
    cr = np.concatenate([[0.0], tiled(c2.real)])
    ci = np.concatenate([[0.0], tiled(c2.imag)])
    x3 = np.concatenate([[0.0], tiled(a3)])
    dims = {"l": len(hl), "q": [], "s": [2 * n] * blocks}
    Gq = None
    if formulation == "lmi":
        z = np.zeros(nx)
        rows4 = [
            [x1, cr, z, -ci],
            [cr, x3, ci, z],
            [z, ci, x1, cr],
            [-ci, z, cr, x3],
        ]
        GB = np.zeros((16, nx))
        for i in range(4):
            for j in range(4):
                GB[j * 4 + i] = -rows4[i][j]  # column-major
        psd_blocks.append(GB)
        dims["s"].append(4)
    else:
        Gq = -np.array([x1 + x3, 2 * cr, 2 * ci, x1 - x3])
        dims["q"] = [4]

    parts = [Gl] + ([Gq] if Gq is not None else []) + psd_blocks
    G = np.vstack(parts)
    hvec = np.concatenate([hl, np.zeros(G.shape[0] - len(hl))])
    c = np.zeros(nx)
    c[0] = -1.0

    # the residual floor in double precision sits near 1e-10; asking for
    # more makes the iterates drift away from the optimum
    res = None
    for eps in (1e-9, 1e-7):
        opts = {"show_progress": False, "abstol": eps, "reltol": eps, "feastol": 10 * eps,
                "maxiters": 60, "refinement": 2}
        # the default QR-based KKT solver; Cholesky loses about two digits here
        res = solvers.conelp(cvxopt.matrix(c), cvxopt.matrix(G), cvxopt.matrix(hvec), dims,
                             options=opts)
        if res["status"] == "optimal":
            break
    x = np.array(res["x"]).ravel() if res["x"] is not None else None
    zl = np.array(res["z"]).ravel() if res["z"] is not None else None
    return res, x, zl, E, dims, h, hnorm2, gamma


def _unpack_dual_blocks(zl, dims):
    out = []
    off = dims["l"] + sum(dims["q"])
    for k in dims["s"]:
        out.append(zl[off:off + k * k].reshape(k, k, order="F"))
        off += k * k
    return out


BOUNDARY_RTOL = 1e-9


def _at_capacity(inst: ConvexInstance) -> bool:
    # SNR floor within BOUNDARY_RTOL of what MRT delivers
    best = inst.power * float(np.linalg.norm(inst.channel) ** 2) / inst.noise_power
    return inst.snr_floor >= best * (1.0 - BOUNDARY_RTOL)


def _boundary_solution(inst: ConvexInstance, sensing_beams: bool) -> RelaxedSolution:
    """Closed form at the MRT capacity, where MRT is the only feasible point.

    No interior point exists, so the rate multiplier is not attained; the
    multipliers that depend on it are reported as NaN.
    """
    n = inst.mat.n_tx
    u = inst.channel / np.linalg.norm(inst.channel)
    R_C = inst.power * np.outer(u, u.conj())
    t1, t2, t3 = traces(inst.mat, R_C)
    z2 = -t2 / t3
    Z_B = np.array([[1.0, z2], [np.conj(z2), abs(z2) ** 2]])
    t = sensing_gain(inst.mat, R_C)
    nan_mat = np.full((n, n), np.nan, dtype=complex)
    return RelaxedSolution(
        t=t, R_C=R_C, R_S=np.zeros((n, n), complex), Z_B=Z_B, mu_rate=np.nan, mu_power=np.nan,
        Z_C=nan_mat, Z_S=nan_mat, status="optimal_boundary", dual_objective=t, solve_time=0.0,
        rate_constraint=True, sensing_beams=sensing_beams,
    )


def solve_relaxation(
    inst: ConvexInstance,
    *,
    rate_constraint: bool = True,
    sensing_beams: bool = True,
    formulation: str = "lmi",
    tol: Tolerances = DEFAULT_TOL,
) -> RelaxedSolution:
    """Solve the relaxed problem and return primal and dual quantities.

    The problem is solved in normalized units (unit power, unit-norm channel,
    sensing matrices divided by ``tr(A1)/N_t``) and every multiplier is mapped
    back to the original units before returning.  ``formulation`` selects the
    2x2 Hermitian LMI (``"lmi"``) or the equivalent rotated second-order cone
    (``"soc"``).
    """
    if formulation not in ("lmi", "soc"):
        raise ValueError(f"unknown formulation {formulation!r}")
    if rate_constraint and not inst.feasible:
        raise InfeasibleInstanceError(
            f"rate target {inst.rate_target:.6g} bps/Hz exceeds the MRT capacity "
            f"{inst.mrt_capacity:.6g} bps/Hz"
        )
    n = inst.mat.n_tx
    P = inst.power
    a_scale = float(np.trace(inst.mat.A1).real) / n
    if rate_constraint and _at_capacity(inst):
        return _boundary_solution(inst, sensing_beams)

    start = time.perf_counter()
    res, x, zl, E, dims, h, hnorm2, gamma = _solve_conic(
        inst, a_scale, rate_constraint, sensing_beams, formulation
    )
    elapsed = time.perf_counter() - start

    status = res["status"]
    if x is None or status in ("primal infeasible", "dual infeasible"):
        raise SolverError(f"cone solver returned status {status!r}", status)
    if status != "optimal":
        # the interior-point iterates stall near the optimum on some instances;
        # accept them only if the residuals say they are still good
        worst = max(res["primal infeasibility"] or np.inf, res["dual infeasibility"] or np.inf)
        if not worst <= 1e-6:
            raise SolverError(f"cone solver stopped with status {status!r}, residual {worst:.2e}", status)
        status = "optimal_inaccurate"
    else:
        status = "optimal"

    nb = E.shape[0]
    t_hat = float(x[0])
    R_C = np.einsum("k,kij->ij", x[1:1 + nb], E)
    R_S = np.einsum("k,kij->ij", x[1 + nb:1 + 2 * nb], E) if sensing_beams else np.zeros((n, n), complex)

    mu_p_hat = float(zl[0])
    mu_r_hat = float(zl[1]) if rate_constraint else 0.0
    blocks = _unpack_dual_blocks(zl, dims)
    Z_C_hat = unrealify_dual(blocks[0])
    Z_S_hat = unrealify_dual(blocks[1]) if sensing_beams else np.zeros((n, n), complex)
    if formulation == "lmi":
        Z_B = unrealify_dual(blocks[-1])
    else:
        # cone dual (u, v) with u = s0 + s3, v = s0 - s3 and cross term (s1, s2)
        zq = zl[dims["l"]:dims["l"] + 4]
        Z_B = np.array([[zq[0] + zq[3], zq[1] + 1j * zq[2]],
                        [zq[1] - 1j * zq[2], zq[0] - zq[3]]])

    dual_hat = mu_p_hat - mu_r_hat * gamma * inst.noise_power / (P * hnorm2)
    gap = abs(t_hat - dual_hat) / max(1.0, abs(t_hat))
    if gap > tol.gap:
        raise DualityGapError(f"relative duality gap {gap:.2e} exceeds {tol.gap:.0e}", status)

    return RelaxedSolution(
        t=t_hat * a_scale * P,
        R_C=P * hermitian_part(R_C),
        R_S=P * hermitian_part(R_S),
        Z_B=Z_B,
        mu_rate=mu_r_hat * a_scale / hnorm2,
        mu_power=mu_p_hat * a_scale,
        Z_C=a_scale * Z_C_hat,
        Z_S=a_scale * Z_S_hat,
        status=status,
        dual_objective=dual_hat * a_scale * P,
        solve_time=elapsed,
        rate_constraint=rate_constraint,
        sensing_beams=sensing_beams,
    )


def certificate_matrix(mat: SensingMatrices, z2: complex) -> np.ndarray:
    D = mat.A1 + z2 * mat.A2.conj().T + np.conj(z2) * mat.A2 + abs(z2) ** 2 * mat.A3
    return 0.5 * (D + D.conj().T)


def recover_certificate(sol: RelaxedSolution, mat: SensingMatrices, tol: Tolerances = DEFAULT_TOL) -> Certificate:
    """Normalize the LMI multiplier and eigendecompose ``D*`` (eigenvalues descending)."""
    z1 = sol.Z_B[0, 0]
    if not np.isfinite(z1) or abs(z1) < 1e-9:
        raise DegenerateDualError(f"LMI multiplier has z1 = {z1!r}")
    z2 = complex(sol.Z_B[0, 1] / z1)
    D = certificate_matrix(mat, z2)
    vals, vecs = np.linalg.eigh(D)
    vals, vecs = vals[::-1], vecs[:, ::-1]
    d1 = vals[0]
    mult = int(np.sum(d1 - vals <= tol.cluster * abs(d1)))
    return Certificate(z2=z2, z1_raw=complex(z1), D_star=D, eigenvalues=vals, eigenvectors=vecs,
                       multiplicity=mult)


def _lam1(m):
    return float(np.linalg.eigvalsh(0.5 * (m + m.conj().T))[-1])


def case_margins(sol: RelaxedSolution, cert: Certificate, inst: ConvexInstance) -> dict:
    h = inst.channel
    hh = np.outer(h, h.conj())
    gamma = inst.snr_floor if sol.rate_constraint else 0.0
    return {
        "mu_rate_scaled": sol.mu_rate * float(np.linalg.norm(h) ** 2) / cert.d1,
        "lam_plus": _lam1(cert.D_star + sol.mu_rate * hh),
        "lam_minus": _lam1(cert.D_star - sol.mu_rate * gamma * hh),
    }


def classify_case(sol: RelaxedSolution, cert: Certificate, inst: ConvexInstance,
                  tol: Tolerances = DEFAULT_TOL) -> str:
    """``"I"`` (rate constraint slack), ``"II"`` (binding, no sensing beam) or ``"III"``.

    A vanishing eigenvalue gap also occurs when the rate multiplier is only
    numerically nonzero; such points are Case I unless the top eigenspace of
    ``D*`` is orthogonal to the channel, which Case III requires.
    """
    if sol.status == "optimal_boundary":
        return "II"
    m = case_margins(sol, cert, inst)
    if m["mu_rate_scaled"] <= tol.mu:
        return "I"
    if m["lam_plus"] - m["lam_minus"] > tol.lam * cert.d1:
        return "II"
    if channel_leakage(cert, inst.channel) > tol.orth:
        return "I"
    return "III"


def channel_leakage(cert: Certificate, h: np.ndarray) -> float:
    """``||h^H V|| / ||h||`` for the top eigenspace ``V`` of ``D*``."""
    return float(np.linalg.norm(h.conj() @ cert.V) / np.linalg.norm(h))


def _align_phase(w, h):
    inner = np.vdot(h, w)
    if abs(inner) == 0:
        return w
    return w * np.exp(-1j * np.angle(inner))


def numerical_rank(R: np.ndarray, scale: float, rtol: float) -> int:
    vals = np.linalg.eigvalsh(0.5 * (R + R.conj().T))
    return int(np.sum(vals > rtol * scale))


def kkt_residuals(sol: RelaxedSolution, cert: Certificate, inst: ConvexInstance) -> dict:
    """Scaled residuals of complementary slackness, stationarity and dual feasibility.

    Trace-type terms are divided by ``d1 * P``; matrix terms by ``d1``.
    ``Z_C`` and ``Z_S`` are rebuilt from the stationarity conditions and
    compared with the solver's multipliers.
    """
    if sol.status == "optimal_boundary":
        # multipliers are not attained at the boundary point
        return {"max": float("nan")}
    n = cert.D_star.shape[0]
    P = inst.power
    h = inst.channel
    hh = np.outer(h, h.conj())
    gamma = inst.snr_floor if sol.rate_constraint else 0.0
    d1 = cert.d1
    eye = np.eye(n)
    Zc = sol.mu_power * eye - (cert.D_star + sol.mu_rate * hh)
    Zs = sol.mu_power * eye - (cert.D_star - sol.mu_rate * gamma * hh)
    R = sol.R_C + sol.R_S
    t1, t2, t3 = traces(inst.mat, R)
    B = np.array([[t1 - sol.t, t2], [np.conj(t2), t3]])
    ZB = np.array([[1.0, cert.z2], [np.conj(cert.z2), abs(cert.z2) ** 2]])
    z3 = sol.Z_B[1, 1] / sol.Z_B[0, 0]
    rate_slack = (h.conj() @ sol.R_C @ h).real - gamma * (inst.noise_power + (h.conj() @ sol.R_S @ h).real)
    scale = d1 * P
    out = {
        "cs_lmi": abs(np.trace(ZB @ B)) / scale,
        "cs_rate": abs(sol.mu_rate * rate_slack) / scale if sol.rate_constraint else 0.0,
        "cs_power": abs(sol.mu_power * (np.trace(R).real - P)) / scale,
        "cs_comm": abs(np.trace(Zc @ sol.R_C)) / scale,
        "cs_sense": abs(np.trace(Zs @ sol.R_S)) / scale if sol.sensing_beams else 0.0,
        "stat_t": abs(1.0 - sol.Z_B[0, 0]),
        "stat_comm": np.linalg.norm(Zc - sol.Z_C, 2) / d1,
        "stat_sense": np.linalg.norm(Zs - sol.Z_S, 2) / d1 if sol.sensing_beams else 0.0,
        "det_lmi": abs(z3 - abs(cert.z2) ** 2) / (1.0 + abs(cert.z2) ** 2),
        "dual_comm": max(0.0, -np.linalg.eigvalsh(Zc)[0]) / d1,
        "dual_sense": max(0.0, -np.linalg.eigvalsh(Zs)[0]) / d1 if sol.sensing_beams else 0.0,
        "primal_lmi": max(0.0, -np.linalg.eigvalsh(B)[0]) / scale,
        "primal_rate": max(0.0, -rate_slack) / (P * float(np.linalg.norm(h) ** 2)),
        "primal_power": max(0.0, np.trace(R).real - P) / P,
        "gap": abs(sol.t - sol.dual_objective) / abs(sol.t),
    }
    out["max"] = float(np.max(list(out.values())))
    return out


def _schur_beam(R_C: np.ndarray, direction: np.ndarray) -> np.ndarray:
    # largest rank-one piece of R_C seen along `direction`: ww^H <= R_C
    v = R_C @ direction
    return v / np.sqrt(np.vdot(direction, v).real)


def purify(sol: RelaxedSolution, cert: Certificate, inst: ConvexInstance, case: str,
           tol: Tolerances = DEFAULT_TOL) -> BeamSolution:
    """Rebuild rank-one beams ``(w, S)`` with ``|S| <= 1`` from the relaxed optimum.

    Case I puts the full power on the top eigenvector of ``D*``.  Cases II and
    III take ``w = R_C f / sqrt(f^H R_C f)`` with ``f`` the unit direction of
    ``R_C`` outside the top eigenspace ``V`` (for Case II, ``V`` plays no
    role and ``f`` is the top eigenvector of ``R_C``).  The remainder
    ``R_C + R_S - w w^H`` is PSD, lies in ``V`` and becomes the single
    sensing beam, so the total covariance and the user's SINR are those of
    the relaxed optimum.
    """
    P = inst.power
    h = inst.channel
    notes = {}
    if case == "I":
        w = np.sqrt(P) * cert.q1
        S = []
    elif case in ("II", "III"):
        R_C = 0.5 * (sol.R_C + sol.R_C.conj().T)
        if case == "III":
            V = cert.V
            proj = np.eye(len(h)) - V @ V.conj().T
            M = proj @ R_C @ proj
        else:
            M = R_C
        _, vecs = np.linalg.eigh(0.5 * (M + M.conj().T))
        f = vecs[:, -1]
        if abs(np.vdot(f, h)) <= 1e-8 * np.linalg.norm(h):
            f = _fallback_direction(sol, cert, inst)
            notes["f_fallback"] = True
        w = _schur_beam(R_C, f)
        notes["beta_c"] = float(np.vdot(f, R_C @ f).real)
        rem = R_C + sol.R_S - np.outer(w, w.conj())
        rem = 0.5 * (rem + rem.conj().T)
        vals, vecs = np.linalg.eigh(rem)
        S = []
        if case == "III":
            if vals[-2] > tol.cluster * P:
                # remainder spread over a repeated top eigenspace: collapse onto q1
                S = [np.sqrt(max(np.trace(rem).real, 0.0)) * cert.q1]
                notes["collapsed"] = True
            else:
                S = [np.sqrt(max(vals[-1], 0.0)) * vecs[:, -1]]
            notes["sense_q1_alignment"] = float(abs(np.vdot(cert.q1, S[0])) / np.linalg.norm(S[0]))
        else:
            if np.isfinite(sol.mu_rate):
                hh = np.outer(h, h.conj())
                _, evecs = np.linalg.eigh(cert.D_star + sol.mu_rate * hh)
                eta = evecs[:, -1]
                notes["eta1_alignment"] = float(abs(np.vdot(eta, w)) / np.linalg.norm(w))
            notes["dropped_power"] = float(max(np.trace(rem).real, 0.0))
    else:
        raise ValueError(f"unknown case {case!r}")

    w = _align_phase(w, h)
    beams = BeamSolution(w=w, S=S, pcrb=float("nan"), rate=float("nan"), case_label=case,
                         D_star=cert.D_star, eigenvalues=cert.eigenvalues,
                         multiplicity=cert.multiplicity, purification_applied=True,
                         relaxed_t=sol.t, notes=notes)
    if sol.rate_constraint:
        w2, S2, tau_s, tau_w = restore_rate(w, S, h, inst.noise_power, inst.rate_target)
        beams.w, beams.S = _align_phase(w2, h), S2
        beams.notes["rate_restore"] = (tau_s, tau_w)
    _finalize(beams, inst)
    loss = (sol.t - beams.gain) / abs(sol.t)
    beams.notes["tightness_loss"] = loss
    if loss > tol.tight:
        raise TightnessError(
            f"purified objective {beams.gain:.12g} is below the relaxed optimum {sol.t:.12g} "
            f"(relative loss {loss:.3g})"
        )
    if sol.rate_constraint:
        shortfall = inst.rate_target - beams.rate
        beams.notes["rate_shortfall"] = shortfall
        if shortfall > tol.rate:
            raise TightnessError(
                f"purified rate {beams.rate:.12g} misses the target {inst.rate_target:.12g} "
                f"by {shortfall:.3g} bps/Hz"
            )
    return beams


def _bisect(ok, iters: int = 60) -> float:
    # smallest tau in [0, 1] with ok(tau), assuming monotonicity and ok(1)
    lo, hi = 0.0, 1.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def restore_rate(w: np.ndarray, S: list, h: np.ndarray, noise_power: float, rate_target: float):
    """Nudge ``(w, S)`` onto the rate constraint when solver round-off left it short.

    Power first moves from the sensing beam into ``w`` (scaling both), then
    ``w`` rotates toward the channel at fixed norm.  Each step uses the
    smallest move that meets the target, found by bisection.  Returns the
    new beams and the two step sizes.
    """
    # aim a hair above the target so the check never flips on the last ulp
    goal = rate_target + 1e-12

    def short(w_, S_):
        return rate(h, w_, S_, noise_power) < goal

    tau_s = tau_w = 0.0
    if not short(w, S):
        return w, S, tau_s, tau_w
    if S:
        s = S[0]
        pw, ps = np.linalg.norm(w) ** 2, np.linalg.norm(s) ** 2

        def shift(tau):
            scale = np.sqrt((pw + tau * ps) / pw) if pw > 0 else 0.0
            return w * scale, [s * np.sqrt(1.0 - tau)]

        if pw > 0 and not short(*shift(1.0)):
            tau_s = _bisect(lambda t: not short(*shift(t)))
            w, S = shift(tau_s)
            return w, S, tau_s, tau_w
        if pw > 0:
            tau_s = 1.0
            w, _ = shift(1.0)
        S = []
    norm = np.linalg.norm(w)
    u = h / np.linalg.norm(h)
    base = _align_phase(w, h) / norm if norm > 0 else u

    def rotate(tau):
        v = (1.0 - tau) * base + tau * u
        return norm * v / np.linalg.norm(v)

    if norm > 0 and not short(rotate(1.0), S):
        tau_w = _bisect(lambda t: not short(rotate(t), S))
        w = rotate(tau_w)
    return w, S, tau_s, tau_w


def _fallback_direction(sol, cert, inst):
    n = cert.D_star.shape[0]
    hh = np.outer(inst.channel, inst.channel.conj())
    Zc = sol.mu_power * np.eye(n) - (cert.D_star + sol.mu_rate * hh)
    vals, vecs = np.linalg.eigh(Zc)
    null = vecs[:, vals <= 1e-6 * cert.d1]
    V = cert.V
    f = null @ (null.conj().T @ inst.channel)
    f = f - V @ (V.conj().T @ f)
    return f / np.linalg.norm(f)


def _finalize(beams: BeamSolution, inst: ConvexInstance) -> None:
    R = beams.covariance
    beams.gain = sensing_gain(inst.mat, R)
    beams.pcrb = pcrb_from_gain(beams.gain, inst.mat.prior_fisher, inst.link.gain)
    beams.rate = rate(inst.channel, beams.w, beams.S, inst.noise_power)


def solve_beamforming(inst: ConvexInstance, tol: Tolerances = DEFAULT_TOL, **kwargs) -> BeamSolution:
    """Full pipeline: relax, certify, classify, purify."""
    sol = solve_relaxation(inst, tol=tol, **kwargs)
    cert = recover_certificate(sol, inst.mat, tol)
    case = classify_case(sol, cert, inst, tol)
    beams = purify(sol, cert, inst, case, tol)
    kkt = kkt_residuals(sol, cert, inst)
    beams.kkt_residual = kkt["max"]
    beams.notes["kkt"] = kkt
    if sol.status != "optimal_boundary":
        beams.notes["margins"] = case_margins(sol, cert, inst)
    beams.notes["mu_power"] = sol.mu_power
    beams.notes["h_V"] = float(np.linalg.norm(inst.channel.conj() @ cert.V) / np.linalg.norm(inst.channel))
    beams.rank_rc = numerical_rank(sol.R_C, inst.power, tol.cluster)
    beams.rank_rs = numerical_rank(sol.R_S, inst.power, tol.cluster)
    beams.solve_time = sol.solve_time
    beams.status = sol.status
    return beams
