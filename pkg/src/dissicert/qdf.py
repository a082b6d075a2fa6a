"""Quadratic difference forms over fixed-width signal windows.

A coefficient matrix Psi of size (M+1)q defines the form
Q(w)(t) = w_[t,t+M]' Psi w_[t,t+M]; M = -1 is encoded as the void matrix and
evaluates to zero.  This module provides evaluation, degree, the one-step
rate-of-change operator, nonnegativity on restricted behaviors, PSD
re-factorization, degree reduction, and the built-in supply rates.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from . import lti_core
from ._linalg import psd_clip, symmetrize, uy_to_w_permutation

DEGREE_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class QdfCoeff:
    """Symmetric coefficient matrix of a quadratic difference form."""

    q: int
    psi: np.ndarray

    def __post_init__(self):
        if self.q < 1:
            raise ValueError("q must be positive")
        mat = np.asarray(self.psi, dtype=float)
        if mat.size == 0:
            mat = np.zeros((0, 0))
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ValueError(f"coefficient matrix must be square, got {mat.shape}")
        if mat.shape[0] % self.q != 0:
            raise ValueError(
                f"matrix size {mat.shape[0]} is not a multiple of q = {self.q}")
        object.__setattr__(self, "psi", symmetrize(mat))

    @property
    def M(self) -> int:
        """Window exponent: the matrix covers M+1 samples; -1 when void."""
        return self.psi.shape[0] // self.q - 1

    def block(self, i: int, j: int) -> np.ndarray:
        q = self.q
        return self.psi[i * q:(i + 1) * q, j * q:(j + 1) * q]

    @classmethod
    def zero(cls, q: int, M: int = -1) -> "QdfCoeff":
        return cls(q, np.zeros(((M + 1) * q, (M + 1) * q)))


def qdf_eval(phi: QdfCoeff, w: lti_core.Trajectory, t: int) -> float:
    """Evaluate the form at time t; zero for the void coefficient matrix."""
    if w.q != phi.q:
        raise ValueError(f"trajectory has q = {w.q}, coefficient has q = {phi.q}")
    if phi.M == -1:
        if t < 0 or t > w.T:
            raise ValueError("time index out of range")
        return 0.0
    win = w.window(t, phi.M + 1)
    return float(win @ phi.psi @ win)


def degree(phi: QdfCoeff, rtol: float = DEGREE_RTOL) -> int:
    """Smallest d with all block rows above index d zero; -1 for the zero form.

    Blocks count as zero below an entrywise threshold relative to the largest
    entry, so exact zeros survive and solver noise does not inflate the degree.
    """
    if phi.M == -1:
        return -1
    cut = rtol * max(float(np.max(np.abs(phi.psi))), 0.0)
    for i in range(phi.M, -1, -1):
        row = phi.psi[i * phi.q:(i + 1) * phi.q, :]
        if np.max(np.abs(row)) > cut:
            return i
    return -1


def minimize_coeff(phi: QdfCoeff, rtol: float = DEGREE_RTOL) -> QdfCoeff:
    """Truncate to the minimal coefficient matrix of size (degree+1)q."""
    d = degree(phi, rtol)
    k = (d + 1) * phi.q
    return QdfCoeff(phi.q, phi.psi[:k, :k])


def nabla(phi: QdfCoeff) -> QdfCoeff:
    """Coefficient of the one-step rate of change of the form."""
    q = phi.q
    size = phi.psi.shape[0]
    out = np.zeros((size + q, size + q))
    out[q:, q:] += phi.psi
    out[:size, :size] -= phi.psi
    return QdfCoeff(q, out)


@dataclass(frozen=True, eq=False)
class BehaviorBasis:
    """Columns of G span a restricted behavior over a window of ``window`` samples."""

    G: np.ndarray
    window: int
    q: int

    def __post_init__(self):
        G = np.asarray(self.G, dtype=float)
        if G.ndim != 2 or G.shape[0] != self.window * self.q:
            raise ValueError(
                f"basis rows ({G.shape[0] if G.ndim == 2 else '?'}) must equal "
                f"window * q = {self.window * self.q}")
        object.__setattr__(self, "G", G.copy())


def _pad_to_window(phi: QdfCoeff, window: int) -> np.ndarray:
    """Top-left placement of the coefficient inside a larger window."""
    size = window * phi.q
    if phi.psi.shape[0] > size:
        raise ValueError("window shorter than the coefficient matrix")
    out = np.zeros((size, size))
    k = phi.psi.shape[0]
    out[:k, :k] = phi.psi
    return out


def nonneg_on_behavior(phi: QdfCoeff, basis: BehaviorBasis, tol: float = 1e-9) -> bool:
    """True iff G' Psi G >= 0 at tolerance, certifying Q(w)(t) >= 0 on the behavior."""
    if basis.q != phi.q:
        raise ValueError("signal widths differ")
    if basis.window < phi.M + 1:
        raise ValueError("basis window shorter than the form's window")
    padded = _pad_to_window(phi, basis.window)
    reduced = symmetrize(basis.G.T @ padded @ basis.G)
    if reduced.size == 0:
        return True
    vals = np.linalg.eigvalsh(reduced)
    scale = max(1.0, float(np.max(np.abs(vals))))
    return bool(vals[0] >= -tol * scale)


def psd_equivalent(phi: QdfCoeff, basis: BehaviorBasis, tol: float = 1e-9) -> QdfCoeff:
    """Behavior-equivalent coefficient matrix that is globally PSD.

    Factor G' Psi G = F' F (eigendecomposition, negative eigenvalues within
    tolerance zeroed), solve F' = G' K' for the minimum-norm K = F G^+, and
    return K' K.  Raises if the reduced matrix has an eigenvalue below
    -tol * scale, i.e. the form was not nonnegative on the behavior.
    """
    if basis.q != phi.q:
        raise ValueError("signal widths differ")
    if basis.window < phi.M + 1:
        raise ValueError("basis window shorter than the form's window")
    padded = _pad_to_window(phi, basis.window)
    reduced = symmetrize(basis.G.T @ padded @ basis.G)
    if reduced.size == 0:
        return QdfCoeff.zero(phi.q, basis.window - 1)
    vals, vecs = np.linalg.eigh(reduced)
    scale = max(1.0, float(np.max(np.abs(vals))))
    if vals[0] < -tol * scale:
        raise ValueError(
            f"form is not nonnegative on the behavior (eigenvalue {vals[0]:.3e})")
    F = (vecs * np.sqrt(np.maximum(vals, 0.0))).T
    K = F @ np.linalg.pinv(basis.G)
    return QdfCoeff(phi.q, K.T @ K)


@dataclass(frozen=True, eq=False)
class SupplyRate:
    """A QDF designated as a supply rate, stored with minimal coefficient matrix."""

    coeff: QdfCoeff
    kind: str = "custom"
    gamma: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "coeff", minimize_coeff(self.coeff))

    @property
    def q(self) -> int:
        return self.coeff.q

    @property
    def degree(self) -> int:
        return self.coeff.M

    @property
    def is_static(self) -> bool:
        return self.degree <= 0

    def static_matrix(self) -> np.ndarray:
        """The q x q matrix of a static supply (zero matrix for the zero form)."""
        if not self.is_static:
            raise ValueError("supply rate is dynamic")
        if self.degree == -1:
            return np.zeros((self.q, self.q))
        return self.coeff.psi.copy()

    def static_blocks(self, m: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Partition (S11, S12, S22) of a static supply for an (m, p) split."""
        S = self.static_matrix()
        return S[:m, :m], S[:m, m:], S[m:, m:]


def passivity_supply(m: int) -> SupplyRate:
    """Static supply s(u, y) = 2 u'y; requires as many outputs as inputs."""
    if m < 1:
        raise ValueError("m must be positive")
    S = np.zeros((2 * m, 2 * m))
    S[:m, m:] = np.eye(m)
    S[m:, :m] = np.eye(m)
    return SupplyRate(QdfCoeff(2 * m, S), kind="passivity")


def l2gain_supply(m: int, p: int, gamma: float) -> SupplyRate:
    """Static supply s(u, y) = gamma^2 |u|^2 - |y|^2."""
    if m < 1 or p < 1:
        raise ValueError("m and p must be positive")
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    S = np.zeros((m + p, m + p))
    S[:m, :m] = gamma ** 2 * np.eye(m)
    S[m:, m:] = -np.eye(p)
    return SupplyRate(QdfCoeff(m + p, S), kind="l2gain", gamma=float(gamma))


def _fold_once(psi: QdfCoeff, sys: lti_core.StateSpace, entry_tol: float) -> QdfCoeff:
    """Eliminate the last block row/column of a storage coefficient.

    Valid when the degree d is at least the lag: the last window sample
    satisfies w(t+d) = [I; D] u(t+d) + [0; C] Z2 w_[t+d-l, t+d-1], and every
    block Psi_{i,d} annihilates [I; D] (checked, not assumed).  Substituting
    folds the last sample into the lower blocks; see docs/math_notes.md.
    """
    q, n = psi.q, sys.n
    d = psi.M
    ell = lti_core.lag(sys)
    if d < max(ell, 0) or d < 0:
        raise ValueError("fold requires degree at least the lag")
    ID = np.vstack([np.eye(sys.m), sys.D])
    col = psi.psi[:, d * q:]                      # stacked Psi_{i,d}, i = 0..d
    resid = float(np.max(np.abs(col @ ID)))
    scale = max(1.0, float(np.max(np.abs(psi.psi)))) * max(1.0, float(np.max(np.abs(ID))))
    if resid > entry_tol * scale:
        raise ValueError(
            f"not a valid storage coefficient: last-block condition fails "
            f"({resid:.3e} > {entry_tol:.1e} * scale)")
    top = psi.psi[: d * q, : d * q]
    if d == 0:
        return QdfCoeff.zero(q)
    if n == 0 or ell == 0:
        return QdfCoeff(q, top)
    maps = lti_core.state_reconstruction_maps(sys)
    JC = np.vstack([np.zeros((sys.m, n)), sys.C])
    RE = np.zeros((q, d * q))
    RE[:, (d - ell) * q:] = JC @ maps.Z2
    upper = psi.psi[: d * q, d * q:]              # Psi_{i,d} for i < d
    cross = upper @ RE
    quad = RE.T @ psi.block(d, d) @ RE
    return QdfCoeff(q, top + cross + cross.T + quad)


def reduce_degree(phi: QdfCoeff, sys: lti_core.StateSpace, supply_deg: int,
                  entry_tol: float = 1e-8, psd_tol: float = 1e-9) -> QdfCoeff:
    """Shrink a PSD storage coefficient until its degree is below max(supply_deg, lag).

    The input must be a storage coefficient for the system's behavior; the
    fold preconditions are validated at every step and a violation raises.
    Inputs already below the bound are returned unchanged.
    """
    if not lti_core.is_observable(sys):
        raise ValueError("degree reduction requires a minimal (observable) realization")
    if phi.psi.size:
        vals = np.linalg.eigvalsh(phi.psi)
        scale = max(1.0, float(np.max(np.abs(vals))))
        if vals[0] < -psd_tol * scale:
            raise ValueError(f"storage coefficient is not PSD (eigenvalue {vals[0]:.3e})")
    target = max(supply_deg, lti_core.lag(sys))
    psi = minimize_coeff(phi)
    while psi.M >= max(target, 0):
        psi = minimize_coeff(_fold_once(psi, sys, entry_tol))
    return psi


def save_qdf(phi: QdfCoeff, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"q": phi.q, "psi": phi.psi.tolist()}, fh, indent=2)
        fh.write("\n")


def load_qdf(path) -> QdfCoeff:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    return QdfCoeff(int(payload["q"]), np.asarray(payload["psi"], dtype=float))


def save_supply(supply: SupplyRate, path) -> None:
    payload = {
        "q": supply.q,
        "psi": supply.coeff.psi.tolist(),
        "kind": supply.kind,
    }
    if supply.gamma is not None:
        payload["gamma"] = supply.gamma
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def load_supply(path) -> SupplyRate:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    coeff = QdfCoeff(int(payload["q"]), np.asarray(payload["psi"], dtype=float))
    return SupplyRate(coeff, kind=payload.get("kind", "custom"),
                      gamma=payload.get("gamma"))
