"""Weighted average ensembles of Cholesky-based covariance estimates.

Candidates come from the modified Cholesky decomposition under random
variable orderings. Their combination weights minimize a plug-in estimate of
the Frobenius risk ``w'Aw + b'w`` over the simplex (``wae``), optionally with
an adaptive L1 penalty whose strength is picked by Gaussian likelihood
(``wae_star``). ``equal`` is the plain average of the candidates.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import partial

import numpy as np
from numpy.typing import NDArray

from ._parallel import pmap
from .errors import CholEnsembleError, InvalidInput, NoFeasibleXi, NotPositiveDefinite, StageError
from .linalg_core import Permutation, conjugate, log_det_and_trace_solve
from .mcd import CholeskyFactors, DataMatrix, LassoConfig, mcd_fit, reconstruct
from .simplex_qp import SimplexQP, WeightVector, solve, solve_penalized

log = logging.getLogger(__name__)

METHODS = ("equal", "wae", "wae_star")
DEFAULT_M = 30
NONZERO_TOL = 1e-8


def xi_grid(start: float = 0.01, stop: float = 3.0, step: float = 0.05) -> NDArray[np.float64]:
    """Arithmetic grid ``start, start+step, ...`` with every value ``<= stop``."""
    if step <= 0 or start < 0 or stop < start:
        raise InvalidInput("xi grid needs step > 0 and 0 <= start <= stop")
    count = int(np.floor((stop - start) / step + 1e-9)) + 1
    return np.round(start + step * np.arange(count), 12)


DEFAULT_XI_GRID = xi_grid()


@dataclass(frozen=True)
class CandidateEstimate:
    sigma: NDArray[np.float64]
    ordering: Permutation
    factors: CholeskyFactors


@dataclass(frozen=True)
class EnsembleQuadratic:
    A: NDArray[np.float64]
    b: NDArray[np.float64]
    n_used: int


@dataclass(frozen=True)
class EnsembleResult:
    method: str
    sigma_hat: NDArray[np.float64]
    weights: WeightVector
    xi_selected: float | None = None
    candidates: list[CandidateEstimate] = field(default_factory=list, repr=False)

    @property
    def nonzero_weight_count(self) -> int:
        return int(np.sum(self.weights.weights > NONZERO_TOL))


def sample_orderings(p: int, M: int, seed: int) -> list[Permutation]:
    """M uniform random orderings of p variables, one seeded substream each."""
    if p < 1 or M < 1:
        raise InvalidInput("need p >= 1 and M >= 1")
    children = np.random.SeedSequence(seed).spawn(M)
    return [Permutation(tuple(np.random.default_rng(ch).permutation(p))) for ch in children]


def _one_candidate(args, data, config, penalized):
    k, ordering = args
    try:
        factors = mcd_fit(data, ordering, config, penalized=penalized)
    except CholEnsembleError as exc:
        raise StageError("candidate", exc, index=k) from exc
    return CandidateEstimate(conjugate(reconstruct(factors), ordering), ordering, factors)


def build_candidates(data: DataMatrix, orderings: list[Permutation],
                     config: LassoConfig | None = None, *, penalized: bool = True,
                     threads: int = 1) -> list[CandidateEstimate]:
    config = config or LassoConfig()
    fn = partial(_one_candidate, data=data, config=config, penalized=penalized)
    return pmap(fn, list(enumerate(orderings)), threads)


def combine(candidates: list[CandidateEstimate], weights) -> NDArray[np.float64]:
    """``sum_k w_k * sigma_k``, accumulated in candidate order."""
    w = np.asarray(weights, dtype=np.float64)
    out = np.zeros_like(candidates[0].sigma)
    for wk, cand in zip(w, candidates):
        if wk != 0.0:
            out += wk * cand.sigma
    return 0.5 * (out + out.T)


def estimate_quadratic(data: DataMatrix, candidates: list[CandidateEstimate],
                       block_rows: int = 8) -> EnsembleQuadratic:
    """Plug-in risk coefficients for the combination weights.

    With ``u_t^k(i,j) = (x_ti - m_i)(x_tj - m_j) - sigma^k_ij``::

        A[k, l] = sum_ij ( (1/n) sum_t u^k u^l / n  +  sigma^k_ij sigma^l_ij )
        b[k]    = -2 sum_ij sigma^k_ij s_ij

    The first term estimates the finite-sample covariance of the entries
    (asymptotic covariance of sqrt(n)*sigma divided by n). The sum over t is
    streamed over blocks of rows i so the full u tensor is never formed.
    """
    if not candidates:
        raise InvalidInput("no candidates")
    p = data.p
    for k, c in enumerate(candidates):
        if c.sigma.shape != (p, p):
            raise InvalidInput(f"candidate {k} has shape {c.sigma.shape}, expected {(p, p)}")
    n = data.n
    M = len(candidates)
    xc = data.centered()
    S = xc.T @ xc / n
    C = np.stack([c.sigma for c in candidates])  # M x p x p
    rho = np.zeros((M, M))
    for i0 in range(0, p, block_rows):
        i1 = min(i0 + block_rows, p)
        prods = xc[:, i0:i1, None] * xc[:, None, :]  # n x B x p
        U = prods[None] - C[:, None, i0:i1, :]  # M x n x B x p
        U = U.reshape(M, -1)
        rho += U @ U.T
    flat = C.reshape(M, -1)
    gram = flat @ flat.T
    A = rho / (n * n) + gram
    A = 0.5 * (A + A.T)
    b = -2.0 * flat @ S.ravel()
    return EnsembleQuadratic(A, b, n)


def weights_wae(quad: EnsembleQuadratic) -> WeightVector:
    return solve(SimplexQP.from_arrays(quad.A, quad.b))


def weights_wae_star(quad: EnsembleQuadratic, base: WeightVector, xi: float) -> WeightVector:
    """Adaptive-penalty weights with ``theta = 1 / base``; zero base weights stay zero."""
    bw = base.weights
    theta = np.full(bw.size, np.inf)
    keep = bw > NONZERO_TOL
    theta[keep] = 1.0 / bw[keep]
    return solve_penalized(SimplexQP.from_arrays(quad.A, quad.b), theta, xi)


def select_xi(data: DataMatrix, candidates: list[CandidateEstimate], quad: EnsembleQuadratic,
              base: WeightVector, grid=None) -> tuple[float, WeightVector]:
    """Pick xi minimizing ``log|Sigma(xi)| + trace(Sigma(xi)^-1 S)``; ties go to the smaller xi."""
    grid = DEFAULT_XI_GRID if grid is None else np.asarray(grid, dtype=np.float64).ravel()
    if grid.size == 0:
        raise InvalidInput("empty xi grid")
    S = data.sample_covariance()
    best = None
    for xi in grid:
        w = weights_wae_star(quad, base, float(xi))
        sigma = combine(candidates, w.weights)
        try:
            logdet, tr = log_det_and_trace_solve(sigma, S)
        except NotPositiveDefinite as exc:
            log.warning("xi=%g skipped: %s", xi, exc)
            continue
        q = logdet + tr
        if best is None or q < best[0]:
            best = (q, float(xi), w)
    if best is None:
        raise NoFeasibleXi("no xi in the grid gave a positive definite estimate")
    return best[1], best[2]


def _equal_weights(M: int) -> WeightVector:
    return WeightVector(np.full(M, 1.0 / M), float("nan"), float("nan"))


def ensemble_from_candidates(data: DataMatrix, candidates: list[CandidateEstimate],
                             methods=METHODS, grid=None) -> dict[str, EnsembleResult]:
    """Run several methods on one candidate set (the quadratic is shared)."""
    methods = tuple(methods)
    unknown = set(methods) - set(METHODS)
    if unknown:
        raise InvalidInput(f"unknown method(s): {sorted(unknown)}")
    out: dict[str, EnsembleResult] = {}
    M = len(candidates)
    if "equal" in methods:
        w = _equal_weights(M)
        out["equal"] = EnsembleResult("equal", combine(candidates, w.weights), w, None, candidates)
    if "wae" in methods or "wae_star" in methods:
        try:
            quad = estimate_quadratic(data, candidates)
        except CholEnsembleError as exc:
            raise StageError("quadratic", exc) from exc
        try:
            base = weights_wae(quad)
        except CholEnsembleError as exc:
            raise StageError("weights", exc) from exc
        if "wae" in methods:
            out["wae"] = EnsembleResult("wae", combine(candidates, base.weights), base, None,
                                        candidates)
        if "wae_star" in methods:
            try:
                xi, w = select_xi(data, candidates, quad, base, grid)
            except CholEnsembleError as exc:
                raise StageError("xi", exc) from exc
            out["wae_star"] = EnsembleResult("wae_star", combine(candidates, w.weights), w, xi,
                                             candidates)
    return {m: out[m] for m in methods}


def estimate(data: DataMatrix, method: str = "wae", M: int = DEFAULT_M, seed: int = 0,
             config: LassoConfig | None = None, *, grid=None, orderings=None,
             threads: int = 1) -> EnsembleResult:
    """Full pipeline: orderings, candidates, weights, combination."""
    if method not in METHODS:
        raise InvalidInput(f"unknown method {method!r}; expected one of {METHODS}")
    if orderings is None:
        orderings = sample_orderings(data.p, M, seed)
    candidates = build_candidates(data, orderings, config, threads=threads)
    return ensemble_from_candidates(data, candidates, (method,), grid)[method]
