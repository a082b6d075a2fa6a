"""Certification pipeline: from a measured trajectory and prior knowledge to a
dissipativity verdict with an explicit storage-function certificate.

The pipeline checks a Hankel rank condition (the data pin down every
consistent behavior of the assumed class), solves the data-based linear
matrix inequality for a PSD window coefficient, and can convert the window
certificate into a quadratic storage function of the state when a
realization is available.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
import scipy.linalg

from . import datamat, lti_core, qdf, sdp
from ._linalg import DEFAULT_RANK_RTOL, colspace_basis, symmetrize, uy_to_w_permutation

CERTIFIED = "CERTIFIED"
NOT_INFORMATIVE = "NOT_INFORMATIVE"
NOT_CERTIFIED = "NOT_CERTIFIED"
UNDECIDED = "UNDECIDED"


@dataclass(frozen=True)
class PriorKnowledge:
    """Assumed system class: m inputs, p outputs, controllable, lag <= L."""

    m: int
    p: int
    L: int
    n_min_override: Optional[int] = None

    def __post_init__(self):
        if self.m < 1 or self.p < 1:
            raise ValueError("m and p must be positive")
        if self.L < 0:
            raise ValueError("lag bound must be nonnegative")
        if self.n_min_override is not None and self.n_min_override < 0:
            raise ValueError("n_min override must be nonnegative")


@dataclass(frozen=True, eq=False)
class Permutation:
    """0/1 matrix sending stacked [u-window; y-window] to the interleaved window."""

    Pi: np.ndarray


def build_permutation(m: int, p: int, d: int) -> Permutation:
    if d < 0:
        raise ValueError("window length must be nonnegative")
    return Permutation(uy_to_w_permutation(m, p, d))


@dataclass
class RankReport:
    rank: int
    required: int
    n_min: int
    n_min_source: str
    satisfied: bool
    estimate: Optional[datamat.ComplexityEstimate] = None

    def to_dict(self) -> dict:
        out = {
            "rank": self.rank,
            "required": self.required,
            "n_min": self.n_min,
            "n_min_source": self.n_min_source,
            "satisfied": self.satisfied,
        }
        if self.estimate is not None:
            out["estimate"] = {
                "rank_profile": list(self.estimate.rank_profile),
                "n_min_hat": self.estimate.n_min_hat,
                "lag_hat": self.estimate.lag_hat,
                "trusted": self.estimate.trusted,
            }
        return out


@dataclass
class Certificate:
    psi: qdf.QdfCoeff
    lmi_margins: tuple
    rank_report: RankReport
    P: Optional[np.ndarray] = None


@dataclass
class Report:
    verdict: str
    d: int
    q: int
    prior: PriorKnowledge
    supply_kind: str
    rank_report: Optional[RankReport]
    solver_status: Optional[str]
    solver_margins: Optional[tuple]
    solver_iterations: Optional[int]
    certificate: Optional[Certificate]
    conclusive: bool
    reason: str
    elapsed_s: Optional[float] = None

    def to_dict(self, include_timing: bool = True) -> dict:
        def _num(x):
            return None if x is None or not np.isfinite(x) else float(x)

        out = {
            "verdict": self.verdict,
            "conclusive": self.conclusive,
            "reason": self.reason,
            "d": self.d,
            "q": self.q,
            "prior": {
                "m": self.prior.m,
                "p": self.prior.p,
                "L": self.prior.L,
                "n_min_override": self.prior.n_min_override,
            },
            "supply": self.supply_kind,
            "rank_report": self.rank_report.to_dict() if self.rank_report else None,
            "solver": None,
            "certificate": None,
        }
        if self.solver_status is not None:
            out["solver"] = {
                "status": self.solver_status,
                "margins": [_num(v) for v in self.solver_margins],
                "iterations": self.solver_iterations,
            }
        if self.certificate is not None:
            out["certificate"] = {
                "q": self.certificate.psi.q,
                "psi": self.certificate.psi.psi.tolist(),
            }
            if self.certificate.P is not None:
                out["certificate"]["P"] = self.certificate.P.tolist()
        if include_timing and self.elapsed_s is not None:
            out["timing"] = {"elapsed_s": self.elapsed_s}
        return out


@dataclass
class CertifyOptions:
    rank_rtol: float = DEFAULT_RANK_RTOL
    solver: sdp.SolveOptions = field(default_factory=sdp.SolveOptions)
    compress: bool = True        # solve on an orthonormal basis of the Hankel column space
    reduce_static: bool = True   # state-form variable restriction for static supplies


def necessity_applicable(supply: qdf.SupplyRate, m: int, p: int,
                         tol: float = 1e-9) -> bool:
    """Whether a failed certificate is conclusive for this supply rate.

    Requires a static supply whose matrix has inertia (p, 0, m) and whose
    output-output block is negative semidefinite.
    """
    if supply.q != m + p or not supply.is_static or supply.degree < 0:
        return False
    S = supply.static_matrix()
    if sdp.inertia(S, tol) != (p, 0, m):
        return False
    S22 = S[m:, m:]
    if S22.size == 0:
        return True
    scale = max(1.0, float(np.max(np.abs(S))))
    return bool(np.max(np.linalg.eigvalsh(S22)) <= tol * scale)


def _lmi_map(columns: np.ndarray, supply: qdf.SupplyRate, d: int, q: int) -> sdp.AffineSymMap:
    """Affine map of the data LMI from a matrix whose columns span window data.

    Value at Psi is  W' ( [Psi 0; 0 0] - [0 0; 0 Psi] + [Phi 0; 0 0] ) W,
    i.e. the supply minus the one-step increase of the candidate storage,
    sampled on the given window columns.
    """
    if columns.shape[0] != (d + 1) * q:
        raise ValueError(
            f"columns must have {(d + 1) * q} rows for window length d+1 = {d + 1}")
    phi_min = supply.coeff.psi
    if phi_min.shape[0] > (d + 1) * q:
        raise ValueError("window too short for the supply rate degree")
    phi_pad = np.zeros(((d + 1) * q, (d + 1) * q))
    phi_pad[: phi_min.shape[0], : phi_min.shape[0]] = phi_min
    K = symmetrize(columns.T @ phi_pad @ columns)
    if d == 0:
        return sdp.AffineSymMap(K, terms=[], var_dim=0)
    E_top = columns[: d * q, :].T        # rows multiplying the leading window
    E_bot = columns[q:, :].T             # rows multiplying the shifted window
    return sdp.AffineSymMap(K, terms=[(E_top, 0.5 * E_top), (E_bot, -0.5 * E_bot)])


def build_dissipativity_lmi(H: datamat.HankelMatrix, supply: qdf.SupplyRate,
                            d: int, q: int) -> sdp.AffineSymMap:
    """Data LMI over the raw Hankel columns; variable is Psi in S^{qd}."""
    if H.q != q or supply.q != q:
        raise ValueError("signal width mismatch between data and supply")
    if H.depth != d + 1:
        raise ValueError(f"Hankel depth {H.depth} must equal d + 1 = {d + 1}")
    if d < supply.degree:
        raise ValueError("window length below the supply rate degree")
    return _lmi_map(H.entries, supply, d, q)


def certify(w: lti_core.Trajectory, prior: PriorKnowledge, supply: qdf.SupplyRate,
            options: Optional[CertifyOptions] = None) -> Report:
    """Run the full data-driven dissipativity pipeline.

    Steps: fix the window length d = max(deg supply, L); build the depth-(d+1)
    Hankel matrix; obtain the minimal consistent order (override or rank-profile
    estimate); test rank H = n_min + m(d+1); if it holds, solve the data LMI
    for a PSD window storage coefficient.

    Verdicts: CERTIFIED (storage found), NOT_INFORMATIVE (rank condition not
    met, conclusive only for necessity-regime supplies), NOT_CERTIFIED (LMI
    infeasible at tolerance), UNDECIDED (solver gave up).
    """
    opts = options or CertifyOptions()
    start = time.perf_counter()
    m, p = prior.m, prior.p
    q = m + p
    if w.q != q or w.m != m:
        raise ValueError("trajectory partition does not match the prior")
    if supply.q != q:
        raise ValueError("supply rate width does not match the prior")
    d = max(supply.degree, prior.L)
    if w.T < d + 1:
        raise ValueError(f"need at least d + 1 = {d + 1} samples, got {w.T}")
    necessity = necessity_applicable(supply, m, p)

    H = datamat.hankel(w, d + 1)
    estimate = None
    if prior.n_min_override is not None:
        n_min = prior.n_min_override
        source = "override"
    else:
        estimate = datamat.estimate_complexity(w, m, prior.L, opts.rank_rtol)
        n_min = estimate.n_min_hat
        source = "estimated"
        if not estimate.trusted:
            rank_h = datamat.numerical_rank(H, opts.rank_rtol)
            report = RankReport(rank_h, n_min + m * (d + 1), n_min, source,
                                False, estimate)
            return Report(
                NOT_INFORMATIVE, d, q, prior, supply.kind, report,
                None, None, None, None, conclusive=False,
                reason="complexity estimate untrusted; rank condition cannot be verified",
                elapsed_s=time.perf_counter() - start)

    rank_h = datamat.numerical_rank(H, opts.rank_rtol)
    required = n_min + m * (d + 1)
    rank_report = RankReport(rank_h, required, n_min, source,
                             rank_h == required, estimate)
    if rank_h != required:
        reason = ("rank condition failed; conclusive for this supply rate"
                  if necessity else
                  "rank condition failed; sufficient condition not met, "
                  "dissipativity undetermined")
        return Report(NOT_INFORMATIVE, d, q, prior, supply.kind, rank_report,
                      None, None, None, None, conclusive=necessity,
                      reason=reason, elapsed_s=time.perf_counter() - start)

    if opts.compress:
        basis = datamat.behavior_basis_from_data(H, opts.rank_rtol)
        amap = _lmi_map(basis.G, supply, d, q)
    else:
        amap = build_dissipativity_lmi(H, supply, d, q)
    result = sdp.solve_psd_feasibility(amap, opts.solver)

    if result.status == sdp.FEASIBLE:
        psi = qdf.QdfCoeff(q, result.X)
        cert = Certificate(psi, result.margins, rank_report)
        return Report(CERTIFIED, d, q, prior, supply.kind, rank_report,
                      result.status, result.margins, result.iterations, cert,
                      conclusive=True, reason="storage function found",
                      elapsed_s=time.perf_counter() - start)
    if result.status == sdp.INFEASIBLE:
        reason = ("data LMI infeasible; conclusive non-informativity for this "
                  "supply rate" if necessity else
                  "data LMI infeasible at tolerance; sufficient condition not met")
        return Report(NOT_CERTIFIED, d, q, prior, supply.kind, rank_report,
                      result.status, result.margins, result.iterations, None,
                      conclusive=necessity, reason=reason,
                      elapsed_s=time.perf_counter() - start)
    return Report(UNDECIDED, d, q, prior, supply.kind, rank_report,
                  result.status, result.margins, result.iterations, None,
                  conclusive=False, reason="solver inconclusive",
                  elapsed_s=time.perf_counter() - start)


def storage_to_state(psi: qdf.QdfCoeff, sys: lti_core.StateSpace, d: int,
                     psd_tol: float = 1e-7) -> np.ndarray:
    """Quadratic-in-state storage matrix P from a PSD window storage coefficient.

    P = [0; O_d]' Pi' Psi Pi [0; O_d] with Pi the window permutation; along
    every trajectory of a minimal realization a storage form of window d
    evaluates to x(t)' P x(t).
    """
    n, m, p, q = sys.n, sys.m, sys.p, sys.q
    if psi.q != q:
        raise ValueError("signal width mismatch")
    if psi.psi.shape[0] != d * q:
        raise ValueError(f"coefficient must have size q*d = {d * q}, got "
                         f"{psi.psi.shape[0]}")
    if n == 0:
        return np.zeros((0, 0))
    if d < 1:
        raise ValueError("need window length d >= 1 for a system with state")
    if not lti_core.is_observable(sys):
        raise ValueError("conversion requires a minimal (observable) realization")
    if psi.psi.size:
        lam = float(np.linalg.eigvalsh(psi.psi)[0])
        scale = max(1.0, float(np.max(np.abs(psi.psi))))
        if lam < -psd_tol * scale:
            raise ValueError(f"storage coefficient is not PSD (eigenvalue {lam:.3e})")
    O_d = lti_core.observability_matrix(sys, d)
    if datamat.numerical_rank(O_d) < n:
        raise ValueError("window too short: observability matrix is rank deficient")
    pi = uy_to_w_permutation(m, p, d)
    Z = np.vstack([np.zeros((m * d, n)), O_d])
    return symmetrize(Z.T @ pi.T @ psi.psi @ pi @ Z)


def verify_certificate_on_model(sys: lti_core.StateSpace, supply: qdf.SupplyRate,
                                P: np.ndarray, tol: float = 1e-7,
                                n_transitions: int = 100, seed: int = 0) -> bool:
    """Check a fixed P against the model-side dissipation inequality.

    Verifies the quadratic form in (x, u) assembled from the realization, the
    supply matrix, and P is PSD at tolerance, then samples random one-step
    transitions and checks V(x+) - V(x) <= s(u, y) + tol * scale directly.
    """
    S = supply.static_matrix() if hasattr(supply, "static_matrix") else np.asarray(supply, float)
    n, m = sys.n, sys.m
    P = np.asarray(P, dtype=float).reshape(n, n)
    io = np.vstack([
        np.hstack([np.zeros((m, n)), np.eye(m)]),
        np.hstack([sys.C, sys.D]),
    ])
    form = symmetrize(io.T @ S @ io)
    if n:
        J1 = np.hstack([np.eye(n), np.zeros((n, m))])
        J2 = np.hstack([sys.A, sys.B])
        form = form + symmetrize(J1.T @ P @ J1 - J2.T @ P @ J2)
    if form.size:
        lam = float(np.linalg.eigvalsh(form)[0])
        scale = max(1.0, float(np.max(np.abs(form))))
        if lam < -tol * scale:
            return False
    rng = np.random.default_rng(seed)
    p_norm = float(np.linalg.norm(P, 2)) if P.size else 0.0
    s_norm = float(np.linalg.norm(S, 2))
    for _ in range(n_transitions):
        x = rng.standard_normal(n)
        u = rng.standard_normal(m)
        x_next = sys.A @ x + sys.B @ u
        y = sys.C @ x + sys.D @ u
        uy = np.concatenate([u, y])
        lhs = float(x_next @ P @ x_next) - float(x @ P @ x)
        rhs = float(uy @ S @ uy)
        scale = (1.0 + float(x @ x) + float(x_next @ x_next) + float(uy @ uy)) \
            * (1.0 + p_norm + s_norm)
        if lhs - rhs > tol * scale:
            return False
    return True
