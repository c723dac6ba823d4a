"""Connectivity matrices, Perron vectors, quadratic forms and spectral bounds.

A connectivity matrix ``L`` is quasi-positive (nonnegative off the diagonal),
irreducible, and has zero column sums.  ``L[i, j]`` is the rate of movement
from patch ``j`` into patch ``i``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import (
    ColumnSumNonzero,
    ConvergenceFailure,
    NegativeOffDiagonal,
    NotLineSumSymmetric,
    NotQuasiPositive,
    Reducible,
)

COLUMN_SUM_TOL = 1e-9
STRUCTURAL_ZERO = 1e-15
SPECTRAL_TOL = 1e-10

__all__ = [
    "ConnectivityMatrix",
    "PerronPair",
    "validate_connectivity",
    "perron_vector",
    "is_line_sum_symmetric",
    "quadratic_form",
    "pairwise_difference_form",
    "weighted_quadratic_form",
    "is_multiple_of",
    "spectral_bound",
    "is_strongly_connected",
]


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ConnectivityMatrix:
    """A validated connectivity matrix. Build it with :func:`validate_connectivity`."""

    entries: np.ndarray

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)

    @property
    def inf_norm(self) -> float:
        return float(np.abs(self.entries).sum(axis=1).max())


@dataclass(frozen=True, eq=False)
class PerronPair:
    alpha: np.ndarray
    theta: np.ndarray

    @classmethod
    def from_alpha(cls, alpha) -> "PerronPair":
        alpha = np.asarray(alpha, dtype=float)
        return cls(alpha=_frozen(alpha), theta=_frozen(1.0 / alpha))


def _reachable(adj: np.ndarray, start: int) -> np.ndarray:
    seen = np.zeros(adj.shape[0], dtype=bool)
    seen[start] = True
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v in np.flatnonzero(adj[u] & ~seen):
            seen[v] = True
            queue.append(v)
    return seen


def is_strongly_connected(pattern: np.ndarray) -> bool:
    """Strong connectivity of the digraph with an edge ``u -> v`` wherever ``pattern[u, v]``.

    Forward and backward breadth-first search from node 0.
    """
    pattern = np.asarray(pattern, dtype=bool)
    return bool(_reachable(pattern, 0).all() and _reachable(pattern.T, 0).all())


def _edge_pattern(a: np.ndarray) -> np.ndarray:
    # edge j -> i whenever a[i, j] > 0, i.e. adjacency is the transpose of the positivity pattern
    pattern = (a > STRUCTURAL_ZERO).T.copy()
    np.fill_diagonal(pattern, False)
    return pattern


def validate_connectivity(raw, tol: float = COLUMN_SUM_TOL) -> ConnectivityMatrix:
    """Check quasi-positivity, zero column sums and irreducibility.

    The diagonal is rewritten as minus the off-diagonal column sum, so the
    returned matrix has column sums that vanish to rounding.

    Raises
    ------
    NegativeOffDiagonal, ColumnSumNonzero, Reducible
    """
    a = np.array(raw, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"connectivity matrix must be square, got shape {a.shape}")
    n = a.shape[0]
    if n < 2:
        raise ValueError("at least two patches are required")
    if not np.all(np.isfinite(a)):
        raise ValueError("connectivity matrix has non-finite entries")

    off = a.copy()
    np.fill_diagonal(off, 0.0)
    neg = np.argwhere(off < 0)
    if neg.size:
        i, j = neg[0]
        raise NegativeOffDiagonal(
            f"L[{i + 1},{j + 1}] = {a[i, j]!r} < 0: off-diagonal entries must be nonnegative (A1)"
        )

    col_sums = a.sum(axis=0)
    bad = np.flatnonzero(np.abs(col_sums) > tol)
    if bad.size:
        j = bad[0]
        raise ColumnSumNonzero(
            f"column {j + 1} sums to {col_sums[j]!r}, expected 0 within {tol:g} (A1)"
        )

    if not is_strongly_connected(_edge_pattern(a)):
        raise Reducible("movement graph is not strongly connected; L must be irreducible (A1)")

    off[np.abs(off) <= STRUCTURAL_ZERO] = 0.0
    L = off - np.diag(off.sum(axis=0))
    return ConnectivityMatrix(entries=_frozen(L))


def _dominant_pair(a: np.ndarray, tol: float, max_iter: int):
    """Perron root and positive right eigenvector of an irreducible quasi-positive matrix.

    Works on the nonnegative primitive matrix ``B = a + c*I`` with
    ``c = 1 + max|a_ii|``.  The direction is found by repeated squaring of
    ``B`` (each squaring doubles the number of power steps), then polished by
    plain power steps until the Collatz-Wielandt bounds
    ``min (Bx)_i/x_i <= rho(B) <= max (Bx)_i/x_i`` are within ``tol``.
    """
    n = a.shape[0]
    c = 1.0 + np.abs(np.diag(a)).max()
    B = a + c * np.eye(n)

    M = B / B.max()
    x = M.sum(axis=1)
    x /= x.sum()
    for _ in range(64):
        M = M @ M
        M /= M.max()
        x_new = M.sum(axis=1)
        total = x_new.sum()
        if not np.isfinite(total) or total <= 0:
            break
        x_new /= total
        done = np.abs(x_new - x).max() <= 1e-15
        x = x_new
        if done:
            break
    if not np.all(x > 0):
        x = np.full(n, 1.0 / n)

    for _ in range(max_iter):
        y = B @ x
        ratios = y / x
        lo, hi = ratios.min(), ratios.max()
        x = y / y.sum()
        if hi - lo <= tol:
            return 0.5 * (lo + hi) - c, x
        if not np.all(x > 0):
            break
    raise ConvergenceFailure(
        f"power iteration did not reach spectral tolerance {tol:g} in {max_iter} steps"
    )


def perron_vector(L: ConnectivityMatrix, max_iter: int = 10_000) -> PerronPair:
    """Positive null vector ``alpha`` of ``L`` with ``sum(alpha) == 1``, and ``theta = 1/alpha``."""
    a = np.asarray(L.entries)
    norm = L.inf_norm
    c = 1.0 + np.abs(np.diag(a)).max()
    _, alpha = _dominant_pair(a, tol=1e-13 * c, max_iter=max_iter)
    # I + L/c is column stochastic, so these steps keep sum(alpha) == 1
    P = np.eye(a.shape[0]) + a / c
    for _ in range(max_iter):
        if np.abs(a @ alpha).max() <= 1e-12 * norm:
            break
        alpha = P @ alpha
        alpha /= alpha.sum()
    else:
        raise ConvergenceFailure("Perron vector residual above 1e-12*||L||")
    alpha = alpha / alpha.sum()
    if not np.all(alpha > 0):
        raise ConvergenceFailure("Perron vector lost positivity")
    return PerronPair.from_alpha(alpha)


def is_line_sum_symmetric(L, tol: float = 1e-9) -> bool:
    a = np.asarray(L, dtype=float)
    return bool(np.all(np.abs(a.sum(axis=1) - a.sum(axis=0)) <= tol))


def pairwise_difference_form(L, X) -> float:
    """``-1/2 * sum_{i != j} L_ij (X_i - X_j)**2``."""
    a = np.asarray(L, dtype=float)
    X = np.asarray(X, dtype=float)
    off = a - np.diag(np.diag(a))
    diff = X[:, None] - X[None, :]
    return float(-0.5 * np.sum(off * diff**2))


def quadratic_form(L, X, tol: float = 1e-9) -> float:
    """``sum_ij L_ij X_i X_j`` for a line-sum-symmetric ``L``; never positive beyond rounding."""
    a = np.asarray(L, dtype=float)
    if not is_line_sum_symmetric(a, tol=tol):
        raise NotLineSumSymmetric("quadratic form sign guarantee needs a line-sum-symmetric matrix")
    X = np.asarray(X, dtype=float)
    return float(X @ a @ X)


def weighted_quadratic_form(L, pair: PerronPair, X) -> float:
    """``sum_ij theta_i L_ij X_i X_j``; zero exactly on multiples of alpha, negative elsewhere."""
    a = np.asarray(L, dtype=float)
    X = np.asarray(X, dtype=float)
    return float((pair.theta * X) @ (a @ X))


def is_multiple_of(X, alpha, rtol: float = 1e-8) -> bool:
    """Scale-free test that ``X`` is a scalar multiple of the positive vector ``alpha``."""
    q = np.asarray(X, dtype=float) / np.asarray(alpha, dtype=float)
    spread = np.abs(q - np.median(q)).max()
    return bool(spread <= rtol * (1.0 + np.abs(q).max()))


def spectral_bound(
    A,
    quasi_positive: bool = True,
    tol: float = SPECTRAL_TOL,
    max_iter: int = 100_000,
) -> float:
    """Largest real part of the spectrum of ``A``.

    For quasi-positive ``A`` the bound is the Perron root of the
    irreducible diagonal blocks of its Frobenius normal form, each computed
    by shifted power iteration.  Without the flag a dense eigenvalue solver
    is used.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("spectral bound needs a square matrix")
    if not quasi_positive:
        return float(np.linalg.eigvals(A).real.max())

    off = A - np.diag(np.diag(A))
    if np.any(off < 0):
        i, j = np.argwhere(off < 0)[0]
        raise NotQuasiPositive(f"A[{i + 1},{j + 1}] = {A[i, j]!r} is negative")

    n_comp, labels = connected_components(off > 0, directed=True, connection="strong")
    best = -np.inf
    for k in range(n_comp):
        idx = np.flatnonzero(labels == k)
        if idx.size == 1:
            val = A[idx[0], idx[0]]
        else:
            val, _ = _dominant_pair(A[np.ix_(idx, idx)], tol=tol, max_iter=max_iter)
        best = max(best, val)
    return float(best)


def perron_root_and_vectors(A, tol: float = 1e-13, max_iter: int = 100_000):
    """Spectral bound of an irreducible quasi-positive ``A`` with its right and left Perron vectors."""
    A = np.asarray(A, dtype=float)
    s, v = _dominant_pair(A, tol=tol, max_iter=max_iter)
    _, u = _dominant_pair(A.T.copy(), tol=tol, max_iter=max_iter)
    return s, v, u
