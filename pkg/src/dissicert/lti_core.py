"""Discrete-time LTI state-space core.

Realizations, simulation, structural matrices (observability, controllability,
Markov-parameter Toeplitz), lag, window-to-state reconstruction maps, and the
model-based dissipativity oracle used to cross-check data-driven certificates.

Void-dimension conventions: a system with n = 0 has void A, B, C; structural
matrices with k = 0 are void; products through a zero inner dimension are
zero matrices.  All types are immutable values after construction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from . import sdp
from ._linalg import (
    DEFAULT_RANK_RTOL,
    numerical_rank,
    require_symmetric,
    symmetrize,
    uy_to_w_permutation,
)


def _as_2d(a, rows: Optional[int], cols: Optional[int], name: str) -> np.ndarray:
    """Coerce to a float matrix, accepting empty lists for void dimensions."""
    m = np.asarray(a, dtype=float)
    if m.size == 0:
        r = rows if rows is not None else (m.shape[0] if m.ndim >= 1 else 0)
        c = cols if cols is not None else 0
        return np.zeros((r, c))
    if m.ndim == 1:
        m = m.reshape(-1, 1)
    if m.ndim != 2:
        raise ValueError(f"{name} must be a matrix, got shape {m.shape}")
    if rows is not None and m.shape[0] != rows:
        raise ValueError(f"{name} must have {rows} rows, got {m.shape[0]}")
    if cols is not None and m.shape[1] != cols:
        raise ValueError(f"{name} must have {cols} columns, got {m.shape[1]}")
    return m.copy()


@dataclass(frozen=True, eq=False)
class StateSpace:
    """A quadruple (A, B, C, D) with dimensions (n, m, p); n = 0 is allowed."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        D = np.atleast_2d(np.asarray(self.D, dtype=float))
        p, m = D.shape
        if m < 1 or p < 1:
            raise ValueError("systems need at least one input and one output")
        A = _as_2d(self.A, None, None, "A")
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError(f"A must be square, got shape {A.shape}")
        B = _as_2d(self.B, n, m, "B")
        C = _as_2d(self.C, p, n, "C")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", D.copy())

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.D.shape[1]

    @property
    def p(self) -> int:
        return self.D.shape[0]

    @property
    def q(self) -> int:
        return self.m + self.p


@dataclass(frozen=True, eq=False)
class Trajectory:
    """A length-T sequence of stacked samples w(t) = (u(t), y(t)).

    ``samples`` has shape (T, q) with the first m entries of each row the
    input and the last p entries the output.
    """

    samples: np.ndarray
    m: int
    p: int

    def __post_init__(self):
        w = np.atleast_2d(np.asarray(self.samples, dtype=float))
        if self.m < 1 or self.p < 1:
            raise ValueError("partition requires m >= 1 and p >= 1")
        if w.shape[0] < 1:
            raise ValueError("a trajectory needs at least one sample")
        if w.shape[1] != self.m + self.p:
            raise ValueError(
                f"samples have {w.shape[1]} entries, expected q = {self.m + self.p}")
        object.__setattr__(self, "samples", w.copy())

    @classmethod
    def from_uy(cls, u: np.ndarray, y: np.ndarray) -> "Trajectory":
        u = np.atleast_2d(np.asarray(u, dtype=float))
        y = np.atleast_2d(np.asarray(y, dtype=float))
        if u.shape[0] == 1 and y.shape[0] != 1 and u.shape[1] == y.shape[0]:
            u = u.T
        if y.shape[0] == 1 and u.shape[0] != 1 and y.shape[1] == u.shape[0]:
            y = y.T
        if u.shape[0] != y.shape[0]:
            raise ValueError("input and output must have the same length")
        return cls(np.hstack([u, y]), u.shape[1], y.shape[1])

    @property
    def q(self) -> int:
        return self.m + self.p

    @property
    def T(self) -> int:
        return self.samples.shape[0]

    @property
    def u(self) -> np.ndarray:
        return self.samples[:, : self.m]

    @property
    def y(self) -> np.ndarray:
        return self.samples[:, self.m:]

    def window(self, t: int, count: int) -> np.ndarray:
        """Flat window [w(t); ...; w(t+count-1)] of length count*q."""
        if t < 0 or count < 0 or t + count > self.T:
            raise ValueError(
                f"window [{t}, {t + count - 1}] exceeds trajectory of length {self.T}")
        return self.samples[t: t + count].reshape(-1)


@dataclass(frozen=True, eq=False)
class StateTrajectory:
    """States x(0..T) paired with the simulated input-output trajectory."""

    states: np.ndarray
    trajectory: Trajectory


@dataclass(frozen=True, eq=False)
class StateMaps:
    """Window-to-state maps: x(t) = Z1 w_[t,t+l-1] and x(t+l) = Z2 w_[t,t+l-1]."""

    Z1: np.ndarray
    Z2: np.ndarray
    ell: int


def simulate(sys: StateSpace, x0, inputs) -> StateTrajectory:
    """Run the state recursion x+ = Ax + Bu, y = Cx + Du over a sequence of inputs."""
    u = np.atleast_2d(np.asarray(inputs, dtype=float))
    if u.shape[0] == 1 and sys.m == 1 and u.shape[1] > 1:
        u = u.T
    if u.shape[1] != sys.m:
        raise ValueError(f"inputs must have {sys.m} columns, got {u.shape[1]}")
    T = u.shape[0]
    if T < 1:
        raise ValueError("inputs must be nonempty")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape[0] != sys.n:
        raise ValueError(f"x0 must have length {sys.n}, got {x0.shape[0]}")
    states = np.zeros((T + 1, sys.n))
    states[0] = x0
    y = np.zeros((T, sys.p))
    for t in range(T):
        y[t] = sys.C @ states[t] + sys.D @ u[t]
        states[t + 1] = sys.A @ states[t] + sys.B @ u[t]
    return StateTrajectory(states, Trajectory.from_uy(u, y))


def observability_matrix(sys: StateSpace, k: int) -> np.ndarray:
    """Stack C, CA, ..., CA^{k-1}; k = 0 gives the 0 x n void matrix."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    rows = []
    block = sys.C
    for _ in range(k):
        rows.append(block)
        block = block @ sys.A
    if not rows:
        return np.zeros((0, sys.n))
    return np.vstack(rows)


def controllability_matrix(sys: StateSpace, k: int) -> np.ndarray:
    """[A^{k-1} B ... A B  B]; k = 0 gives the n x 0 void matrix."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    cols = []
    block = sys.B
    for _ in range(k):
        cols.append(block)
        block = sys.A @ block
    if not cols:
        return np.zeros((sys.n, 0))
    return np.hstack(list(reversed(cols)))


def toeplitz_markov(sys: StateSpace, k: int) -> np.ndarray:
    """Block lower-triangular Toeplitz matrix of Markov parameters, size pk x mk."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    p, m = sys.p, sys.m
    out = np.zeros((p * k, m * k))
    if k == 0:
        return out
    # Markov parameters D, CB, CAB, ...
    params = [sys.D]
    block = sys.B
    for _ in range(k - 1):
        params.append(sys.C @ block)
        block = sys.A @ block
    for i in range(k):
        for j in range(i + 1):
            out[i * p:(i + 1) * p, j * m:(j + 1) * m] = params[i - j]
    return out


def lag(sys: StateSpace, rank_rtol: float = DEFAULT_RANK_RTOL) -> int:
    """Smallest k with rank O_k = rank O_{k+1}; satisfies 0 <= lag <= n."""
    if sys.n == 0:
        return 0
    full = observability_matrix(sys, sys.n + 1)
    prev = 0
    for k in range(sys.n + 1):
        cur = numerical_rank(full[: (k + 1) * sys.p], rank_rtol)
        if cur == prev:
            return k
        prev = cur
    return sys.n


def is_observable(sys: StateSpace, rank_rtol: float = DEFAULT_RANK_RTOL) -> bool:
    if sys.n == 0:
        return True
    return numerical_rank(observability_matrix(sys, sys.n), rank_rtol) == sys.n


def is_controllable(sys: StateSpace, rank_rtol: float = DEFAULT_RANK_RTOL) -> bool:
    if sys.n == 0:
        return True
    return numerical_rank(controllability_matrix(sys, sys.n), rank_rtol) == sys.n


def state_reconstruction_maps(sys: StateSpace,
                              window: Optional[int] = None,
                              rank_rtol: float = DEFAULT_RANK_RTOL) -> StateMaps:
    """Maps recovering x(t) and x(t+l) from the interleaved window w_[t,t+l-1].

    Requires an observable realization.  ``window`` defaults to the lag and
    may be any value >= lag; the left inverse of the observability matrix is
    the Moore-Penrose pseudoinverse.  For n = 0 the maps are void.
    """
    if sys.n == 0:
        return StateMaps(np.zeros((0, 0)), np.zeros((0, 0)), 0)
    if not is_observable(sys, rank_rtol):
        raise ValueError("state reconstruction requires an observable realization")
    ell = lag(sys, rank_rtol)
    k = ell if window is None else int(window)
    if k < max(ell, 1):
        raise ValueError(f"window must be at least the lag ({ell})")
    O_k = observability_matrix(sys, k)
    T_k = toeplitz_markov(sys, k)
    C_k = controllability_matrix(sys, k)
    O_pinv = np.linalg.pinv(O_k)
    A_k = np.linalg.matrix_power(sys.A, k)
    Z1_uy = np.hstack([-O_pinv @ T_k, O_pinv])
    Z2_uy = np.hstack([C_k - A_k @ O_pinv @ T_k, A_k @ O_pinv])
    pi = uy_to_w_permutation(sys.m, sys.p, k)
    return StateMaps(Z1_uy @ pi.T, Z2_uy @ pi.T, k)


def _static_supply_matrix(supply) -> np.ndarray:
    if hasattr(supply, "static_matrix"):
        return np.asarray(supply.static_matrix(), dtype=float)
    return require_symmetric(np.asarray(supply, dtype=float), what="supply matrix")


def model_dissipativity_lmi(sys: StateSpace, supply) -> sdp.AffineSymMap:
    """Quantifier-eliminated dissipation inequality as an affine PSD constraint.

    Substituting the state recursion into V(x+) - V(x) <= s(u, y) and
    requiring the resulting quadratic form in (x, u) to be nonnegative gives

        [I 0]' P [I 0] - [A B]' P [A B] + [0 I; C D]' S [0 I; C D] >= 0

    with variable P >= 0 (see docs/math_notes.md for the derivation).
    """
    S = _static_supply_matrix(supply)
    n, m, p = sys.n, sys.m, sys.p
    if S.shape != (m + p, m + p):
        raise ValueError(f"supply matrix must be {m + p}x{m + p}, got {S.shape}")
    io = np.vstack([
        np.hstack([np.zeros((m, n)), np.eye(m)]),
        np.hstack([sys.C, sys.D]),
    ])
    K = symmetrize(io.T @ S @ io)
    if n == 0:
        return sdp.AffineSymMap(K, terms=[], var_dim=0)
    J1 = np.hstack([np.eye(n), np.zeros((n, m))])
    J2 = np.hstack([sys.A, sys.B])
    return sdp.AffineSymMap(K, terms=[(J1.T, 0.5 * J1.T), (J2.T, -0.5 * J2.T)])


def model_dissipativity_check(sys: StateSpace, supply,
                              options: Optional[sdp.SolveOptions] = None,
                              details: bool = False):
    """Search for P >= 0 satisfying the dissipation inequality for all trajectories.

    Returns the certifying P (n x n, positive semidefinite at tolerance) or
    None when no feasible P is found.  With ``details=True`` also returns the
    full solver result, so callers can distinguish a conclusive infeasibility
    from an inconclusive search.
    """
    amap = model_dissipativity_lmi(sys, supply)
    res = sdp.solve_psd_feasibility(amap, options)
    P = res.X if res.status == sdp.FEASIBLE else None
    if details:
        return P, res
    return P


def random_controllable_system(n: int, m: int, p: int, seed) -> StateSpace:
    """Seeded random realization that is both controllable and observable.

    Entries are i.i.d. uniform on [-1, 1]; A is rescaled to spectral radius
    at most 0.95 so long simulations stay bounded.  Draws are rejected until
    both rank tests pass.
    """
    if n < 0 or m < 1 or p < 1:
        raise ValueError("need n >= 0, m >= 1, p >= 1")
    rng = np.random.default_rng(seed)
    if n == 0:
        D = rng.uniform(-1.0, 1.0, (p, m))
        return StateSpace(np.zeros((0, 0)), np.zeros((0, m)), np.zeros((p, 0)), D)
    while True:
        A = rng.uniform(-1.0, 1.0, (n, n))
        rho = float(np.max(np.abs(np.linalg.eigvals(A)))) if n else 0.0
        if rho > 0.95:
            A *= 0.95 / rho
        B = rng.uniform(-1.0, 1.0, (n, m))
        C = rng.uniform(-1.0, 1.0, (p, n))
        D = rng.uniform(-1.0, 1.0, (p, m))
        sys = StateSpace(A, B, C, D)
        if is_controllable(sys) and is_observable(sys):
            return sys


def save_system(sys: StateSpace, path) -> None:
    """Write a realization as JSON with row-major nested arrays."""
    payload = {
        "A": sys.A.tolist(),
        "B": sys.B.tolist(),
        "C": sys.C.tolist(),
        "D": sys.D.tolist(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def load_system(path) -> StateSpace:
    """Read a realization from JSON; void dimensions are empty arrays."""
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    try:
        D = np.atleast_2d(np.asarray(payload["D"], dtype=float))
    except KeyError as exc:
        raise ValueError("system file must define A, B, C, D") from exc
    p, m = D.shape
    A_raw = payload.get("A", [])
    n = len(A_raw)
    A = _as_2d(A_raw, n, n, "A")
    B = _as_2d(payload.get("B", []), n, m, "B")
    C = _as_2d(payload.get("C", []), p, n, "C")
    return StateSpace(A, B, C, D)
