"""Dense small-scale semidefinite feasibility.

Finds a symmetric positive-semidefinite matrix ``X`` satisfying an affine
positive-semidefinite constraint ``K + L(X) >= 0``.  The solver runs lifted
alternating projections with Dykstra correction on the product cone
``PSD(N) x PSD(R)`` intersected with the affine coupling
``{(X, K + L(X))}``; infeasibility is decided by a margin search over
uniformly shifted cones.  Problem sizes here are at most a few hundred
variables, so every projection is an exact dense eigendecomposition.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from ._linalg import psd_clip, require_symmetric, symmetrize

FEASIBLE = "feasible"
INFEASIBLE = "infeasible_at_tolerance"
INCONCLUSIVE = "inconclusive"

_PROBE_SEED = 20240817


def min_eigenvalue(mat: np.ndarray) -> float:
    """Smallest eigenvalue of a symmetric matrix (+inf for a void matrix)."""
    m = require_symmetric(mat, what="input")
    if m.size == 0:
        return float("inf")
    return float(np.linalg.eigvalsh(m)[0])


def inertia(mat: np.ndarray, tol: float = 1e-9) -> Tuple[int, int, int]:
    """Eigenvalue sign counts (negative, zero, positive) of a symmetric matrix.

    Eigenvalues with ``|lam| <= tol * max|eig|`` count as zero.
    """
    m = require_symmetric(mat, what="input")
    if m.size == 0:
        return (0, 0, 0)
    vals = np.linalg.eigvalsh(m)
    scale = float(np.max(np.abs(vals)))
    cut = tol * scale
    neg = int(np.count_nonzero(vals < -cut))
    pos = int(np.count_nonzero(vals > cut))
    return (neg, m.shape[0] - neg - pos, pos)


# --- svec coordinates: isometry between S^n and R^{n(n+1)/2} ----------------

def _svec_machinery(n: int):
    iu = np.triu_indices(n)
    w = np.where(iu[0] == iu[1], 1.0, np.sqrt(2.0))
    return iu, w


def _svec(mat: np.ndarray, iu, w) -> np.ndarray:
    return mat[iu] * w


def _smat(vec: np.ndarray, n: int, iu, w) -> np.ndarray:
    out = np.zeros((n, n))
    out[iu] = vec / w
    out = out + out.T
    out[np.diag_indices(n)] *= 0.5
    return out


class AffineSymMap:
    """Affine map ``X -> K + L(X)`` from S^N to S^R.

    The linear action is supplied either as a list of ``(E_i, F_i)`` pairs,
    meaning ``L(X) = sum_i E_i X F_i^T + F_i X E_i^T``, or as an opaque pair
    of callbacks (apply and adjoint).  Construction probes symmetry of the
    output and adjoint consistency on fixed random inputs.
    """

    def __init__(
        self,
        K: np.ndarray,
        terms: Optional[Sequence[Tuple[np.ndarray, np.ndarray]]] = None,
        apply_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        adjoint_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        var_dim: Optional[int] = None,
    ):
        self.K = require_symmetric(K, what="constant term K")
        self.R = self.K.shape[0]
        if apply_fn is not None or adjoint_fn is not None:
            if apply_fn is None or adjoint_fn is None or var_dim is None:
                raise ValueError("callback maps need apply_fn, adjoint_fn and var_dim")
            self.terms = None
            self._apply_fn = apply_fn
            self._adjoint_fn = adjoint_fn
            self.N = int(var_dim)
        else:
            self.terms = [(np.asarray(E, float), np.asarray(F, float))
                          for E, F in (terms or [])]
            self._apply_fn = None
            self._adjoint_fn = None
            if self.terms:
                n_set = {E.shape[1] for E, _ in self.terms} | {F.shape[1] for _, F in self.terms}
                r_set = {E.shape[0] for E, _ in self.terms} | {F.shape[0] for _, F in self.terms}
                if len(n_set) != 1 or r_set != {self.R}:
                    raise ValueError("inconsistent term dimensions")
                self.N = n_set.pop()
            else:
                self.N = 0 if var_dim is None else int(var_dim)
        self._mat_cache: Optional[np.ndarray] = None
        self._check_probes()

    def linear(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, float)
        if X.shape != (self.N, self.N):
            raise ValueError(f"variable must be {self.N}x{self.N}, got {X.shape}")
        if self.terms is None:
            return symmetrize(self._apply_fn(X))
        out = np.zeros((self.R, self.R))
        for E, F in self.terms:
            EXF = E @ X @ F.T
            out += EXF + EXF.T
        return symmetrize(out)

    def adjoint(self, Y: np.ndarray) -> np.ndarray:
        Y = np.asarray(Y, float)
        if Y.shape != (self.R, self.R):
            raise ValueError(f"adjoint input must be {self.R}x{self.R}, got {Y.shape}")
        if self.terms is None:
            return symmetrize(self._adjoint_fn(Y))
        out = np.zeros((self.N, self.N))
        for E, F in self.terms:
            EYF = E.T @ Y @ F
            out += EYF + EYF.T
        return symmetrize(out)

    def value(self, X: np.ndarray) -> np.ndarray:
        return self.K + self.linear(X)

    def matrix(self) -> np.ndarray:
        """Materialize L in svec coordinates, shape (R(R+1)/2, N(N+1)/2)."""
        if self._mat_cache is None:
            iu_n, w_n = _svec_machinery(self.N)
            iu_r, w_r = _svec_machinery(self.R)
            dn = self.N * (self.N + 1) // 2
            dr = self.R * (self.R + 1) // 2
            out = np.zeros((dr, dn))
            basis_vec = np.zeros(dn)
            for j in range(dn):
                basis_vec[j] = 1.0
                bj = _smat(basis_vec, self.N, iu_n, w_n)
                out[:, j] = _svec(self.linear(bj), iu_r, w_r)
                basis_vec[j] = 0.0
            self._mat_cache = out
        return self._mat_cache

    def _check_probes(self, rtol: float = 1e-10) -> None:
        if self.N == 0 or self.R == 0:
            return
        rng = np.random.default_rng(_PROBE_SEED)
        for _ in range(3):
            X = symmetrize(rng.standard_normal((self.N, self.N)))
            Y = symmetrize(rng.standard_normal((self.R, self.R)))
            if self.terms is None:
                LX = self._apply_fn(X)
            else:
                LX = np.zeros((self.R, self.R))
                for E, F in self.terms:
                    EXF = E @ X @ F.T
                    LX = LX + EXF + EXF.T
            asym = float(np.max(np.abs(LX - LX.T)))
            scale = 1.0 + float(np.max(np.abs(LX)))
            if asym > 1e-8 * scale:
                raise ValueError("linear action does not map symmetric to symmetric")
            lhs = float(np.tensordot(symmetrize(LX), Y))
            rhs = float(np.tensordot(X, self.adjoint(Y)))
            if abs(lhs - rhs) > rtol * 100 * (1.0 + abs(lhs) + abs(rhs)):
                raise ValueError("adjoint inconsistent with linear action")


@dataclass
class SolveOptions:
    """Options for :func:`solve_psd_feasibility`.

    ``feas_tol`` defaults to ``1e-7 * (1 + ||K||_2)``.  A problem whose best
    achievable margin is established to lie below ``-10 * feas_tol`` is
    reported infeasible; the band in between is inconclusive by design so
    that near-boundary instances never flip sign.
    """

    feas_tol: Optional[float] = None
    max_iter: int = 20000
    stall_window: int = 150
    stall_rel: float = 1e-4
    polish: bool = True
    polish_every: int = 100
    history_stride: int = 50
    x0: Optional[np.ndarray] = None  # warm-start variable (N x N symmetric)


@dataclass
class FeasResult:
    status: str
    X: Optional[np.ndarray]
    margins: Tuple[float, float]
    iterations: int
    residuals: list = field(default_factory=list)
    feas_tol: float = 0.0


class _Workspace:
    """Precomputed quantities shared by all projection runs of one solve."""

    def __init__(self, amap: AffineSymMap):
        self.amap = amap
        self.N, self.R = amap.N, amap.R
        self.iu_n, self.w_n = _svec_machinery(self.N)
        self.iu_r, self.w_r = _svec_machinery(self.R)
        self.k = _svec(amap.K, self.iu_r, self.w_r)
        self.M = amap.matrix()
        dn = self.M.shape[1]
        # normal matrix of the affine projection: (I + L*L) x = x0 + L*(y0 - k)
        self.cho = scipy.linalg.cho_factor(np.eye(dn) + self.M.T @ self.M)
        # svec image of the identity shift used by the margin search:
        # X >= tI with X = X' + tI turns K into K + t (L(I) - I)
        lin_eye = amap.linear(np.eye(self.N)) if self.N else np.zeros((self.R, self.R))
        self.shift = _svec(lin_eye - np.eye(self.R), self.iu_r, self.w_r)

    def smat_x(self, x):
        return _smat(x, self.N, self.iu_n, self.w_n)

    def smat_y(self, y):
        return _smat(y, self.R, self.iu_r, self.w_r)

    def affine_project(self, x, y, kt):
        rhs = x + self.M.T @ (y - kt)
        xp = scipy.linalg.cho_solve(self.cho, rhs)
        return xp, kt + self.M @ xp


def _neg_stats(mat: np.ndarray) -> Tuple[float, float]:
    """(min eigenvalue, Frobenius norm of the negative part)."""
    if mat.size == 0:
        return float("inf"), 0.0
    vals = np.linalg.eigvalsh(mat)
    neg = np.minimum(vals, 0.0)
    return float(vals[0]), float(np.sqrt(np.sum(neg * neg)))


def _clip_psd(mat: np.ndarray) -> np.ndarray:
    if mat.size == 0:
        return mat
    vals, vecs = np.linalg.eigh(mat)
    return symmetrize((vecs * np.maximum(vals, 0.0)) @ vecs.T)


def _dykstra_run(ws: _Workspace, t: float, budget: int, feas_tol: float,
                 opts: SolveOptions, history: list,
                 x_start: Optional[np.ndarray] = None,
                 polish_cb=None, stall_rel: Optional[float] = None) -> dict:
    """Dykstra alternating projections at cone level ``t``.

    The shifted problem (X >= tI, K + L(X) >= tI) is rewritten via
    X = X' + tI so the cones stay standard and only the constant term moves.
    Outcomes: 'witness' (affine-consistent point with both original margins
    >= -feas_tol, possibly refined by the polish callback), 'stalled' (cone
    distance stopped decreasing at a clearly positive value, evidence that
    level t is infeasible), or 'budget'.
    """
    kt = ws.k + t * ws.shift
    stall_rel = opts.stall_rel if stall_rel is None else stall_rel
    x = np.zeros(ws.M.shape[1]) if x_start is None else x_start.copy()
    x, y = ws.affine_project(x, kt + ws.M @ x, kt)
    corr_x = np.zeros_like(x)
    corr_y = np.zeros_like(kt)
    best_margin = -np.inf
    best_x = x.copy()
    gaps: list = []
    margins = (-np.inf, -np.inf)
    check_every = 3
    for it in range(budget):
        X_aff = ws.smat_x(x)
        Y_aff = ws.smat_y(y)
        if it % check_every == 0 or it == budget - 1:
            mx, dx = _neg_stats(X_aff)
            my, dy = _neg_stats(Y_aff)
            margins = (mx + t, my + t)
            margin = min(margins)
            if margin > best_margin:
                best_margin = margin
                best_x = x.copy()
            if margins[0] >= -feas_tol and margins[1] >= -feas_tol:
                return {"outcome": "witness", "x": x, "t": t, "margins": margins,
                        "iters": it + 1, "best_margin": best_margin}
            gap = float(np.hypot(dx, dy))
            gaps.append(gap)
            if len(history) == 0 or it % opts.history_stride == 0:
                history.append(gap)
            # marginal problems converge slowly; the face polish snaps a
            # near-feasible iterate onto the active face at machine precision
            if (polish_cb is not None and t == 0.0 and it > 0
                    and it % opts.polish_every < check_every
                    and margin > -1e6 * feas_tol):
                refined = polish_cb(X_aff)
                if refined is not None:
                    return {"outcome": "polished", "X": refined, "t": t,
                            "iters": it + 1, "best_margin": best_margin}
            w = max(2, opts.stall_window // check_every)
            if len(gaps) >= 2 * w:
                recent, older = gaps[-1], gaps[-w]
                if recent > 30.0 * feas_tol and (older - recent) < stall_rel * recent:
                    return {"outcome": "stalled", "gap": recent, "t": t,
                            "iters": it + 1, "best_margin": best_margin, "x": best_x}
        # Dykstra step: cone projection of the corrected point, then affine
        Xc = _clip_psd(X_aff + ws.smat_x(corr_x))
        Yc = _clip_psd(Y_aff + ws.smat_y(corr_y))
        xc = _svec(Xc, ws.iu_n, ws.w_n)
        yc = _svec(Yc, ws.iu_r, ws.w_r)
        corr_x = (x + corr_x) - xc
        corr_y = (y + corr_y) - yc
        x, y = ws.affine_project(xc, yc, kt)
    return {"outcome": "budget", "t": t, "iters": budget,
            "best_margin": best_margin, "x": best_x}


def _face_polish(amap: AffineSymMap, X: np.ndarray, scale: float) -> Optional[np.ndarray]:
    """Refine a near-feasible point to near machine precision.

    The feasible sets of interest here are typically thin: at any solution
    the constraint value is singular along a fixed family of directions, the
    geometry where plain alternating projections crawl.  The polish
    identifies those near-null eigendirections U0 of the current value,
    pins ``(K + L(X)) U0 = 0`` as equalities, and alternates the cheap
    least-squares projection onto that subspace with a PSD clip of X; with
    the degenerate directions pinned, the remainder is transversal and the
    inner loop closes in a handful of rounds.  A strictly-positive-target
    variant handles problems with interior solutions.  Candidates are
    returned only when independently verified at the roundoff level.
    """
    if amap.N == 0:
        return None
    accept = 1e-10 * scale
    X = symmetrize(np.asarray(X, float))
    Y = amap.value(X)
    y_scale = max(1.0, float(np.max(np.abs(Y)))) if Y.size else 1.0
    vals_y, vecs_y = np.linalg.eigh(Y)
    iu_n, w_n = _svec_machinery(amap.N)
    iu_r, w_r = _svec_machinery(amap.R)
    M = amap.matrix()
    dn = M.shape[1]

    def verified(candidate: np.ndarray) -> bool:
        return (min_eigenvalue(candidate) >= -accept
                and min_eigenvalue(amap.value(candidate)) >= -accept)

    def pocs(U0: np.ndarray, rounds: int = 25) -> Optional[np.ndarray]:
        k0 = U0.shape[1]
        cons = np.zeros((amap.R * k0, dn))
        basis_vec = np.zeros(dn)
        for j in range(dn):
            basis_vec[j] = 1.0
            bj = _smat(basis_vec, amap.N, iu_n, w_n)
            cons[:, j] = (amap.linear(bj) @ U0).ravel()
            basis_vec[j] = 0.0
        rhs = -(amap.K @ U0).ravel()
        pinv = np.linalg.pinv(cons, rcond=1e-12)
        x = _svec(X, iu_n, w_n)
        for _ in range(rounds):
            x = x + pinv @ (rhs - cons @ x)
            Xc = _clip_psd(_smat(x, amap.N, iu_n, w_n))
            x = _svec(Xc, iu_n, w_n)
        x = x + pinv @ (rhs - cons @ x)
        flat = _smat(x, amap.N, iu_n, w_n)
        for candidate in (flat, _clip_psd(flat)):
            if verified(candidate):
                return candidate
        return None

    candidate = psd_clip(X)
    if verified(candidate):
        return candidate
    # pin the most negative eigendirections of the value to zero, most
    # blocking first; the right count is the solution's kernel dimension,
    # which is unknown, so climb until a candidate verifies
    k_max = int(np.count_nonzero(vals_y < 0.05 * y_scale))
    for k0 in range(1, min(k_max, amap.R - 1) + 1):
        refined = pocs(vecs_y[:, :k0])
        if refined is not None:
            return refined

    # interior-solution variant: least-squares step toward a strictly
    # positive target value, then clip
    lam_min_y = float(vals_y[0]) if vals_y.size else 0.0
    shift = 2.0 * max(0.0, -lam_min_y) + 1e-12 * y_scale
    target = psd_clip(Y) + shift * np.eye(amap.R)
    x = _svec(X, iu_n, w_n)
    for _ in range(8):
        Yc = amap.K + _smat(M @ x, amap.R, iu_r, w_r)
        delta, *_ = np.linalg.lstsq(M, _svec(target - Yc, iu_r, w_r), rcond=None)
        x = _svec(_clip_psd(_smat(x + delta, amap.N, iu_n, w_n)), iu_n, w_n)
        candidate = _smat(x, amap.N, iu_n, w_n)
        if verified(candidate):
            return candidate
    return None


def solve_psd_feasibility(amap: AffineSymMap, opts: Optional[SolveOptions] = None) -> FeasResult:
    """Find X >= 0 with K + L(X) >= 0, at tolerance.

    Verdicts: ``feasible`` returns an explicit X whose margins
    (min eig X, min eig K + L(X)) are both >= -feas_tol, re-verified by a
    direct eigenvalue check.  ``infeasible_at_tolerance`` means the shifted
    margin search established that no point achieves margins above
    ``-10 * feas_tol``.  Anything unresolved within the iteration budget is
    ``inconclusive``.
    """
    opts = opts or SolveOptions()
    k_norm = float(np.linalg.norm(amap.K, 2)) if amap.K.size else 0.0
    scale = 1.0 + k_norm
    feas_tol = opts.feas_tol if opts.feas_tol is not None else 1e-7 * scale
    history: list = []

    def finish_feasible(X: np.ndarray, iterations: int, polished: bool = False) -> FeasResult:
        if opts.polish and not polished:
            refined = _face_polish(amap, X, scale)
            if refined is not None:
                X = refined
        # soundness: margins re-verified independently of the iteration
        m1 = min_eigenvalue(X)
        m2 = min_eigenvalue(amap.value(X))
        if m1 < -feas_tol or m2 < -feas_tol:
            return FeasResult(INCONCLUSIVE, None, (m1, m2), iterations, history, feas_tol)
        return FeasResult(FEASIBLE, X, (m1, m2), iterations, history, feas_tol)

    # void variable: the constraint is a constant matrix
    if amap.N == 0:
        m = min_eigenvalue(amap.K) if amap.R else float("inf")
        X = np.zeros((0, 0))
        if m >= -feas_tol:
            return FeasResult(FEASIBLE, X, (float("inf"), m), 0, history, feas_tol)
        if m < -10.0 * feas_tol:
            return FeasResult(INFEASIBLE, None, (float("inf"), m), 0, history, feas_tol)
        return FeasResult(INCONCLUSIVE, None, (float("inf"), m), 0, history, feas_tol)
    if amap.R == 0:
        return FeasResult(FEASIBLE, np.zeros((amap.N, amap.N)),
                          (0.0, float("inf")), 0, history, feas_tol)

    ws = _Workspace(amap)
    budget_main = max(200, (4 * opts.max_iter) // 10)
    budget_refute = max(200, opts.max_iter // 4)
    budget_resume = max(200, opts.max_iter - budget_main - budget_refute)
    polish_cb = (lambda X: _face_polish(amap, X, scale)) if opts.polish else None
    x_start = None
    if opts.x0 is not None:
        x_start = _svec(symmetrize(np.asarray(opts.x0, float)), ws.iu_n, ws.w_n)

    # a loose stall threshold is safe here: a premature handoff only moves
    # work to the refutation run, which must independently confirm a gap
    run0 = _dykstra_run(ws, 0.0, budget_main, feas_tol, opts, history,
                        x_start=x_start, polish_cb=polish_cb,
                        stall_rel=max(opts.stall_rel, 1e-3))
    iters = run0["iters"]
    if run0["outcome"] == "polished":
        return finish_feasible(run0["X"], iters, polished=True)
    if run0["outcome"] == "witness":
        return finish_feasible(ws.smat_x(run0["x"]), iters)

    # margin search: a stalled gap at the refutation level, below the
    # inconclusive band, establishes infeasibility at tolerance
    t_ref = -10.0 * feas_tol
    run_ref = _dykstra_run(ws, t_ref, budget_refute, feas_tol, opts, history,
                           x_start=run0.get("x"))
    iters += run_ref["iters"]
    if run_ref["outcome"] == "witness":
        X = ws.smat_x(run_ref["x"]) + run_ref["t"] * np.eye(ws.N)
        m1 = min_eigenvalue(X)
        m2 = min_eigenvalue(amap.value(X))
        if m1 >= -feas_tol and m2 >= -feas_tol:
            return finish_feasible(X, iters)
    if run_ref["outcome"] == "stalled":
        x_best = run0.get("x")
        margins = (-np.inf, -np.inf)
        if x_best is not None:
            Xb = ws.smat_x(x_best)
            margins = (min_eigenvalue(Xb), min_eigenvalue(amap.value(Xb)))
        return FeasResult(INFEASIBLE, None, margins, iters, history, feas_tol)

    # the refutation level looked feasible, so the original problem is at
    # worst marginal: resume the unshifted search with a strict stall rule
    warm = run_ref.get("x")
    run1 = _dykstra_run(ws, 0.0, budget_resume, feas_tol, opts, history,
                        x_start=warm, polish_cb=polish_cb)
    iters += run1["iters"]
    if run1["outcome"] == "polished":
        return finish_feasible(run1["X"], iters, polished=True)
    if run1["outcome"] == "witness":
        return finish_feasible(ws.smat_x(run1["x"]), iters)
    best = max(run0["best_margin"], run_ref["best_margin"] + t_ref,
               run1["best_margin"])
    return FeasResult(INCONCLUSIVE, None, (best, best), iters, history, feas_tol)
