"""Shared dense linear-algebra helpers.

One tolerance policy for numerical rank is used across the whole package:
a singular value counts when it exceeds ``max(rows, cols) * sigma_max * rtol``.
"""

from __future__ import annotations

import numpy as np

DEFAULT_RANK_RTOL = 1e-10


def numerical_rank(mat: np.ndarray, rtol: float = DEFAULT_RANK_RTOL) -> int:
    """Rank of a dense matrix via SVD with a relative singular-value cutoff.

    Void matrices (zero rows and/or columns) have rank 0.
    """
    m = np.asarray(mat, dtype=float)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D array, got shape {m.shape}")
    if m.size == 0:
        return 0
    s = np.linalg.svd(m, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > max(m.shape) * s[0] * rtol))


def colspace_basis(mat: np.ndarray, rtol: float = DEFAULT_RANK_RTOL) -> np.ndarray:
    """Orthonormal basis of the column space (thin SVD, same cutoff as rank)."""
    m = np.asarray(mat, dtype=float)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D array, got shape {m.shape}")
    if m.size == 0:
        return np.zeros((m.shape[0], 0))
    u, s, _ = np.linalg.svd(m, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((m.shape[0], 0))
    r = int(np.count_nonzero(s > max(m.shape) * s[0] * rtol))
    return np.ascontiguousarray(u[:, :r])


def symmetrize(mat: np.ndarray) -> np.ndarray:
    m = np.asarray(mat, dtype=float)
    return 0.5 * (m + m.T)


def require_symmetric(mat: np.ndarray, rtol: float = 1e-9, what: str = "matrix") -> np.ndarray:
    """Validate symmetry up to roundoff and return the symmetrized copy."""
    m = np.asarray(mat, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"{what} must be square, got shape {m.shape}")
    if m.size:
        dev = float(np.max(np.abs(m - m.T)))
        scale = max(1.0, float(np.max(np.abs(m))))
        if dev > rtol * scale:
            raise ValueError(f"{what} is not symmetric (max deviation {dev:.3e})")
    return symmetrize(m)


def psd_clip(mat: np.ndarray) -> np.ndarray:
    """Nearest positive-semidefinite matrix in Frobenius norm (eigenvalue clipping)."""
    m = symmetrize(mat)
    if m.size == 0:
        return m
    vals, vecs = np.linalg.eigh(m)
    np.maximum(vals, 0.0, out=vals)
    return symmetrize((vecs * vals) @ vecs.T)


def uy_to_w_permutation(m: int, p: int, k: int) -> np.ndarray:
    """0/1 matrix mapping stacked [u-window; y-window] to the sample-interleaved window.

    Both windows cover k consecutive samples; output rows follow the
    (u(t), y(t), u(t+1), y(t+1), ...) layout.
    """
    q = m + p
    pi = np.zeros((q * k, q * k))
    for i in range(k):
        for j in range(m):
            pi[i * q + j, i * m + j] = 1.0
        for j in range(p):
            pi[i * q + m + j, k * m + i * p + j] = 1.0
    return pi
