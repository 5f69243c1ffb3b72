"""Dense symmetric linear algebra and permutation primitives.

Symmetric matrices are plain ``float64`` ndarrays holding the full square;
:func:`sym_matrix` enforces exact symmetry by mirroring the lower triangle.
Permutations are 0-based: position ``k`` of the permuted variable list holds
original variable ``order[k]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.linalg import solve_triangular

from .errors import InvalidInput, NotPositiveDefinite

PIVOT_RTOL = 1e-12


def sym_matrix(a: ArrayLike, *, name: str = "matrix") -> NDArray[np.float64]:
    """Return a square float64 copy of ``a`` with the lower triangle mirrored up."""
    m = np.array(a, dtype=np.float64, copy=True)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
        raise InvalidInput(f"{name} must be a non-empty square 2-D array, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InvalidInput(f"{name} has non-finite entries")
    iu = np.triu_indices(m.shape[0], 1)
    m[iu] = m.T[iu]
    return m


@dataclass(frozen=True)
class Permutation:
    order: tuple[int, ...]

    def __post_init__(self):
        order = tuple(int(i) for i in self.order)
        if len(order) < 1 or sorted(order) != list(range(len(order))):
            raise InvalidInput(f"not a permutation of 0..p-1: {self.order!r}")
        object.__setattr__(self, "order", order)

    @classmethod
    def identity(cls, p: int) -> Permutation:
        return cls(tuple(range(p)))

    @classmethod
    def from_one_based(cls, order) -> Permutation:
        return cls(tuple(int(i) - 1 for i in order))

    @property
    def size(self) -> int:
        return len(self.order)

    def as_array(self) -> NDArray[np.intp]:
        return np.asarray(self.order, dtype=np.intp)

    def inverse(self) -> Permutation:
        inv = np.empty(self.size, dtype=np.intp)
        inv[self.as_array()] = np.arange(self.size)
        return Permutation(tuple(inv))

    def matrix(self) -> NDArray[np.float64]:
        """Permutation matrix P with ``P[order[k], k] = 1``."""
        P = np.zeros((self.size, self.size))
        P[self.as_array(), np.arange(self.size)] = 1.0
        return P


class EigenDecomposition(NamedTuple):
    values: NDArray[np.float64]  # nonincreasing
    vectors: NDArray[np.float64]  # columns


def sym_eigen(m: ArrayLike) -> EigenDecomposition:
    m = sym_matrix(m)
    w, v = np.linalg.eigh(m)
    return EigenDecomposition(w[::-1].copy(), v[:, ::-1].copy())


def cholesky_pd(m: NDArray[np.float64]) -> NDArray[np.float64]:
    """Lower Cholesky factor of ``m``; raises NotPositiveDefinite on a small pivot.

    A pivot (squared diagonal of the factor) below ``1e-12 * max|diag(m)|``
    counts as failure.
    """
    m = sym_matrix(m)
    scale = float(np.max(np.abs(np.diag(m))))
    tol = PIVOT_RTOL * scale
    try:
        c = np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite("matrix is not positive definite", _smallest_pivot(m)) from None
    pivots = np.diag(c) ** 2
    if scale == 0.0 or pivots.min() <= tol:
        raise NotPositiveDefinite("matrix is not positive definite", float(pivots.min()))
    return c


def _smallest_pivot(m: NDArray[np.float64]) -> float:
    # Unpivoted LDL^T elimination, stopped at the first nonpositive pivot.
    a = m.copy()
    p = a.shape[0]
    smallest = np.inf
    for k in range(p):
        piv = a[k, k]
        smallest = min(smallest, piv)
        if piv <= 0:
            break
        col = a[k + 1:, k] / piv
        a[k + 1:, k + 1:] -= np.outer(col, a[k, k + 1:])
    return float(smallest)


def log_det_and_trace_solve(m: ArrayLike, s: ArrayLike) -> tuple[float, float]:
    """Return ``(log|m|, trace(m^{-1} s))`` from a single Cholesky factorization."""
    m = sym_matrix(m, name="m")
    s = sym_matrix(s, name="s")
    if m.shape != s.shape:
        raise InvalidInput(f"shape mismatch {m.shape} vs {s.shape}")
    c = cholesky_pd(m)
    logdet = 2.0 * float(np.sum(np.log(np.diag(c))))
    # trace(m^-1 s) = trace(C^-1 s C^-T)
    y = solve_triangular(c, s, lower=True)
    z = solve_triangular(c, y.T, lower=True)
    return logdet, float(np.trace(z))


def conjugate(m: ArrayLike, perm: Permutation) -> NDArray[np.float64]:
    """Relabel a matrix from permuted to original ordering.

    ``result[order[a], order[b]] == m[a, b]``, i.e. ``P m P^T``.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape != (perm.size, perm.size):
        raise InvalidInput(f"dimension mismatch: matrix {m.shape}, permutation of size {perm.size}")
    idx = perm.as_array()
    out = np.empty_like(m)
    out[np.ix_(idx, idx)] = m
    return out
