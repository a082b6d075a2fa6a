"""Data-side matrices: Hankel construction, numerical rank, restricted-behavior
bases, and complexity (minimal order / lag) estimation from rank profiles."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from . import _linalg
from .lti_core import Trajectory
from .qdf import BehaviorBasis

DEFAULT_RANK_RTOL = _linalg.DEFAULT_RANK_RTOL


@dataclass(frozen=True, eq=False)
class HankelMatrix:
    """Block Hankel matrix of depth k: column j stacks w(j), ..., w(j+k-1)."""

    entries: np.ndarray
    depth: int
    q: int
    T: int

    @property
    def width(self) -> int:
        return self.entries.shape[1]


def hankel(w: Trajectory, k: int) -> HankelMatrix:
    """Hankel matrix of depth k, shape (qk) x (T-k+1); entries are copies."""
    if k < 1 or k > w.T:
        raise ValueError(f"depth must satisfy 1 <= k <= T = {w.T}, got {k}")
    width = w.T - k + 1
    samples = w.samples
    entries = np.vstack([samples[i:i + width].T for i in range(k)])
    return HankelMatrix(np.ascontiguousarray(entries), k, w.q, w.T)


def numerical_rank(mat, rtol: float = DEFAULT_RANK_RTOL) -> int:
    """Count of singular values above max(shape) * sigma_max * rtol; void -> 0."""
    if isinstance(mat, HankelMatrix):
        mat = mat.entries
    return _linalg.numerical_rank(mat, rtol)


@dataclass(frozen=True, eq=False)
class ComplexityEstimate:
    """Rank-profile based estimates of minimal order and lag.

    ``trusted`` is True only when some rank increment equals the input count
    m within the profile and all later increments stay at m, the signature of
    exact data from a persistently excited LTI system.
    """

    rank_profile: Tuple[int, ...]
    n_min_hat: int
    lag_hat: int
    trusted: bool


def estimate_complexity(w: Trajectory, m: int, L: int,
                        rank_rtol: float = DEFAULT_RANK_RTOL) -> ComplexityEstimate:
    """Estimate minimal order and lag from Hankel ranks of depth 1 .. L+1.

    For exact data the rank of the depth-k Hankel matrix is m*k plus the rank
    of the k-step observability matrix, so increments equal m exactly once k
    reaches the lag; the estimated order is then r_{l+1} - m*(l+1).  When no
    increment equals m the estimate falls back to depth L+1 and is flagged
    untrusted.
    """
    if m != w.m:
        raise ValueError(f"trajectory partition has m = {w.m}, got {m}")
    if L < 0:
        raise ValueError("lag bound must be nonnegative")
    if w.T < L + 2:
        raise ValueError(f"need T >= L + 2 = {L + 2} samples, got {w.T}")
    ranks = [0]
    for k in range(1, L + 2):
        ranks.append(numerical_rank(hankel(w, k), rank_rtol))
    increments = [ranks[k + 1] - ranks[k] for k in range(L + 1)]
    lag_hat = next((k for k, inc in enumerate(increments) if inc == m), None)
    if lag_hat is None:
        n_min_hat = max(0, ranks[L + 1] - m * (L + 1))
        return ComplexityEstimate(tuple(ranks[1:]), n_min_hat, L, False)
    n_min_hat = ranks[lag_hat + 1] - m * (lag_hat + 1)
    trusted = all(inc == m for inc in increments[lag_hat:])
    return ComplexityEstimate(tuple(ranks[1:]), n_min_hat, lag_hat, trusted)


def behavior_basis_from_data(H: HankelMatrix,
                             rank_rtol: float = DEFAULT_RANK_RTOL) -> BehaviorBasis:
    """Orthonormal basis of the Hankel column space, packaged with its window."""
    G = _linalg.colspace_basis(H.entries, rank_rtol)
    return BehaviorBasis(G, window=H.depth, q=H.q)
