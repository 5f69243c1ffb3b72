"""Compiled coordinate-descent kernel for the Gram-form lasso.

Minimizes ``b'Gb - 2c'b + lam*|b|_1`` (i.e. ``||y - Zb||^2 + lam*|b|_1`` with
``G = Z'Z``, ``c = Z'y``) along a decreasing path of ``lam`` with warm starts.

A path point has converged when a full sweep changes no coordinate by more
than ``G_jj * delta_j**2 >= tol``.
"""

from __future__ import annotations

import numpy as np
from numba import njit

@njit(cache=True)
def _sweep(G, grad, beta, half, active_only):
    q = beta.shape[0]
    maxd = 0.0
    for j in range(q):
        if active_only and beta[j] == 0.0:
            continue
        gjj = G[j, j]
        if gjj <= 0.0:
            continue
        bj = beta[j]
        rho = grad[j] + gjj * bj
        if rho > half:
            nb = (rho - half) / gjj
        elif rho < -half:
            nb = (rho + half) / gjj
        else:
            nb = 0.0
        d = nb - bj
        if d != 0.0:
            beta[j] = nb
            for k in range(q):
                grad[k] -= G[k, j] * d
            wd = gjj * d * d
            if wd > maxd:
                maxd = wd
    return maxd


@njit(cache=True)
def cd_path(G, c, lambdas, beta0, max_iter, tol):
    """Return ``(betas, failed)``: one row per lambda and the first
    non-converged index (-1 if every point converged)."""
    q = G.shape[0]
    nl = lambdas.shape[0]
    out = np.zeros((nl, q))
    beta = beta0.copy()
    grad = c - G @ beta
    failed = -1
    for li in range(nl):
        half = 0.5 * lambdas[li]
        converged = False
        it = 0
        while it < max_iter:
            it += 1
            maxd = _sweep(G, grad, beta, half, False)
            if maxd < tol:
                converged = True
                break
            # inner passes over the current support
            while it < max_iter:
                it += 1
                if _sweep(G, grad, beta, half, True) < tol:
                    break
        if not converged and failed < 0:
            failed = li
        out[li] = beta
    return out, failed
