"""Quadratic programs over the probability simplex.

Solves ``min w'Qw + c'w  s.t.  sum(w) = 1, w >= 0`` with a primal active-set
method in null-space coordinates. When the optimum is not unique (singular
``Q``), a second active-set pass picks the minimum-Euclidean-norm optimum.
An indefinite ``Q`` is shifted by a ridge just large enough to make it PSD;
the shift is reported as ``ridge_applied``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import ConvergenceFailure, InfeasibleProblem, InvalidInput

RIDGE_RTOL = 1e-10
NONCONVEX_RTOL = 1e-12


@dataclass(frozen=True)
class SimplexQP:
    quad: NDArray[np.float64]
    lin: NDArray[np.float64]
    ridge_applied: float = 0.0

    @classmethod
    def from_arrays(cls, quad: ArrayLike, lin: ArrayLike | None = None) -> SimplexQP:
        Q = np.array(quad, dtype=np.float64)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1] or Q.shape[0] < 1:
            raise InvalidInput(f"quad must be a non-empty square matrix, got shape {Q.shape}")
        c = np.zeros(Q.shape[0]) if lin is None else np.array(lin, dtype=np.float64).ravel()
        if c.shape != (Q.shape[0],):
            raise InvalidInput(f"lin has shape {c.shape}, expected ({Q.shape[0]},)")
        if not (np.all(np.isfinite(Q)) and np.all(np.isfinite(c))):
            raise InvalidInput("non-finite QP data")
        return cls(0.5 * (Q + Q.T), c)

    @property
    def dim(self) -> int:
        return self.lin.shape[0]

    def objective(self, w: ArrayLike) -> float:
        w = np.asarray(w, dtype=np.float64)
        return float(w @ self.quad @ w + self.lin @ w)


@dataclass(frozen=True)
class WeightVector:
    weights: NDArray[np.float64]
    objective: float
    kkt_residual: float
    ridge_applied: float = 0.0

    @property
    def nonzero_count(self) -> int:
        return int(np.sum(self.weights > 1e-8))


def kkt_residual(Q: NDArray, c: NDArray, w: NDArray) -> float:
    """Largest violation of the simplex KKT conditions at ``w``."""
    g = 2.0 * Q @ w + c
    free = w > 0
    mu = float(np.mean(g[free])) if free.any() else float(np.min(g))
    res = 0.0
    if free.any():
        res = float(np.max(np.abs(g[free] - mu)))
    if (~free).any():
        res = max(res, float(np.max(np.maximum(mu - g[~free], 0.0))))
    res = max(res, abs(float(w.sum()) - 1.0), float(np.max(np.maximum(-w, 0.0))))
    return res


def _null_basis(C, tol=1e-12):
    """Orthonormal basis of null(C) and the min-norm solution map pinv(C)."""
    u, sv, vt = np.linalg.svd(C, full_matrices=True)
    rank = int(np.sum(sv > tol * max(float(sv[0]) if sv.size else 0.0, 1.0)))
    N = vt[rank:].T
    pinv = (vt[:rank].T / sv[:rank]) @ u[:, :rank].T
    return N, pinv


def _face_minimizer(Q, c, C, d, free, tol):
    """Minimizer of the objective on ``{w : C w = d, w_i = 0 off free}``.

    Returns ``(w_free, ray)``: ``ray`` is a descent direction along which the
    objective is unbounded (None when the minimum exists). With a singular
    reduced Hessian the minimum-norm minimizer is returned, because the
    particular solution ``pinv(C_F) d`` is orthogonal to the null-space basis.
    """
    N, pinv = _null_basis(C[:, free])
    w0 = pinv @ d
    if N.shape[1] == 0:
        return w0, None
    Qf = Q[np.ix_(free, free)]
    H = 2.0 * N.T @ Qf @ N
    g0 = N.T @ (2.0 * Qf @ w0 + c[free])
    evals, evecs = np.linalg.eigh(H)
    scale = max(float(np.max(np.abs(evals))), 1.0)
    pos = evals > tol * scale
    coef = evecs.T @ g0
    null_part = evecs[:, ~pos] @ coef[~pos]
    if np.linalg.norm(null_part) > 1e3 * tol * max(1.0, float(np.linalg.norm(g0))):
        return w0, -(N @ null_part)
    z = -(evecs[:, pos] @ (coef[pos] / evals[pos]))
    return w0 + N @ z, None


def _active_set(Q, c, C, d, w, free, max_iter, tol=1e-12):
    """Primal active-set iterations from the feasible point ``w`` (support in ``free``).

    Returns ``(w, g, mu)`` with the final gradient and equality multipliers.
    """
    for _ in range(max_iter):
        idx = np.flatnonzero(free)
        target, ray = _face_minimizer(Q, c, C, d, idx, tol)
        cur = w[idx]
        direction = ray if ray is not None else target - cur
        neg = direction < 0
        alpha = 1.0 if ray is None else np.inf
        if neg.any():
            ratios = -cur[neg] / direction[neg]
            alpha = min(alpha, float(np.min(ratios)))
        if not np.isfinite(alpha):
            raise ConvergenceFailure("objective unbounded on the feasible set")

        if alpha < 1.0 or ray is not None:
            blocking = idx[neg][int(np.argmin(-cur[neg] / direction[neg]))]
            w[idx] = cur + alpha * direction
            w[blocking] = 0.0
            free[blocking] = False
            w[w < 0] = 0.0
            continue

        w[idx] = target
        g = 2.0 * Q @ w + c
        # equality multipliers from the free rows: g_F = C_F' mu
        mu = np.linalg.lstsq(C[:, idx].T, g[idx], rcond=None)[0]
        lam = g - C.T @ mu
        lam[free] = np.inf
        j = int(np.argmin(lam))
        if lam[j] >= -1e-10 * (1.0 + float(np.max(np.abs(g)))):
            return w, g, mu
        free[j] = True
    raise ConvergenceFailure(f"active set did not settle within {max_iter} iterations",
                             last_iterate=w.copy(), kkt_residual=kkt_residual(Q, c, w))


def _min_norm_optimum(Q, c, w, g, mu, max_iter):
    """Minimum-norm point of the optimal set containing ``w``.

    Optima of a convex QP share ``Q w``; so with E the indices whose
    multiplier vanishes, the optimal set is ``{v on face E : Q_EE v = Q_EE w_E}``.
    """
    M = w.size
    lam = g - mu[0]
    E = np.flatnonzero((w > 0) | (lam <= 1e-10 * (1.0 + float(np.max(np.abs(g))))))
    QE = Q[np.ix_(E, E)]
    evals, evecs = np.linalg.eigh(QE)
    rng_vecs = evecs[:, evals > 1e-12 * max(float(np.max(np.abs(evals))), 1e-300)]
    # null(Q_EE) within sum-zero directions must be nontrivial for a tie
    C = np.vstack([np.ones((1, E.size)), rng_vecs.T])
    if _null_basis(C)[0].shape[1] == 0:
        return w
    d = C @ w[E]
    wE = w[E].copy()
    freeE = wE > 0
    wE, _, _ = _active_set(np.eye(E.size), np.zeros(E.size), C, d, wE, freeE, max_iter)
    out = np.zeros(M)
    out[E] = wE
    return out


def _solve_core(Q, c, max_iter):
    M = c.size
    start = int(np.argmin(np.diag(Q) + c))
    w = np.zeros(M)
    w[start] = 1.0
    free = np.zeros(M, dtype=bool)
    free[start] = True
    C = np.ones((1, M))
    w, g, mu = _active_set(Q, c, C, np.ones(1), w, free, max_iter)
    return _min_norm_optimum(Q, c, w, g, mu, max_iter)


def solve(qp: SimplexQP) -> WeightVector:
    """Minimize ``w'Qw + c'w`` over the simplex; see module docstring."""
    Q, c = qp.quad, qp.lin
    if not (np.all(np.isfinite(Q)) and np.all(np.isfinite(c))):
        raise InvalidInput("non-finite QP data")
    M = c.size
    ridge = qp.ridge_applied
    if M > 1:
        lam_min = float(np.linalg.eigvalsh(Q)[0])
        dscale = float(np.max(np.abs(np.diag(Q))))
        if lam_min < -NONCONVEX_RTOL * max(dscale, 1e-300):
            ridge = max(0.0, -lam_min) + RIDGE_RTOL * dscale
            Q = Q + ridge * np.eye(M)
    w = _solve_core(Q, c, 100 * max(M, 1))
    w = np.maximum(w, 0.0)
    w /= w.sum()
    return WeightVector(w, float(w @ Q @ w + c @ w), kkt_residual(Q, c, w), ridge)


def solve_penalized(qp: SimplexQP, theta: ArrayLike, xi: float) -> WeightVector:
    """Weighted-L1 penalized simplex QP.

    On the simplex ``xi * sum(theta_i |w_i|)`` is the linear term
    ``xi * theta' w``. Entries of ``theta`` equal to ``+inf`` pin the weight
    to zero and are dropped before solving.
    """
    theta = np.asarray(theta, dtype=np.float64).ravel()
    if theta.shape != (qp.dim,):
        raise InvalidInput(f"theta has shape {theta.shape}, expected ({qp.dim},)")
    if np.any(np.isnan(theta)) or np.any(theta < 0):
        raise InvalidInput("theta entries must be nonnegative")
    if not (xi >= 0 and np.isfinite(xi)):
        raise InvalidInput("xi must be a finite nonnegative number")
    keep = np.isfinite(theta)
    if not keep.any():
        raise InfeasibleProblem("every candidate is excluded (all theta infinite)")
    idx = np.flatnonzero(keep)
    sub = SimplexQP(qp.quad[np.ix_(idx, idx)], qp.lin[idx] + xi * theta[idx])
    res = solve(sub)
    w = np.zeros(qp.dim)
    w[idx] = res.weights
    return WeightVector(w, res.objective, res.kkt_residual, res.ridge_applied)
