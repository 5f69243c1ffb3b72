"""Modified Cholesky decomposition via sequential lasso regressions.

Each variable (in a given ordering) is regressed on the residuals of the
preceding regressions. The lasso objective here is the *unnormalized* one,

    ||y - Z b||_2^2 + lam * ||b||_1

with no 1/n in front of the residual sum of squares, so ``lam`` values scale
with the sample size. With ``standardize`` on, the penalty applies to the
coefficients of unit-SD predictors (``lam * sum_j sd_j |b_j|`` in raw units).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from ._lasso_kernels import cd_path
from .errors import ConvergenceFailure, InvalidInput
from .linalg_core import Permutation

D_FLOOR_RTOL = 1e-10
_SD_EPS = 1e-12


@dataclass(frozen=True)
class LassoConfig:
    """Tuning of the per-regression lasso and its cross-validation.

    ``lambda_min_ratio=None`` resolves to 1e-3 when n > p and 1e-2 otherwise.
    ``cv_seed`` fixes the fold assignment.
    """

    path_length: int = 100
    lambda_min_ratio: float | None = None
    cv_folds: int = 5
    max_iter: int = 10000
    coord_tol: float = 1e-7
    standardize: bool = True
    cv_seed: int = 0

    def __post_init__(self):
        if self.path_length < 1:
            raise InvalidInput("path_length must be >= 1")
        if self.lambda_min_ratio is not None and not 0.0 < self.lambda_min_ratio < 1.0:
            raise InvalidInput("lambda_min_ratio must lie in (0, 1)")
        if self.cv_folds < 2:
            raise InvalidInput("cv_folds must be >= 2")
        if self.max_iter < 1:
            raise InvalidInput("max_iter must be >= 1")
        if not self.coord_tol > 0.0:
            raise InvalidInput("coord_tol must be positive")

    def min_ratio(self, n: int, p: int) -> float:
        if self.lambda_min_ratio is not None:
            return self.lambda_min_ratio
        return 1e-3 if n > p else 1e-2


@dataclass(frozen=True)
class DataMatrix:
    rows: NDArray[np.float64]
    labels: tuple[str, ...] = ()
    column_means: NDArray[np.float64] = field(init=False, repr=False)

    def __post_init__(self):
        rows = np.array(self.rows, dtype=np.float64, copy=True)
        if rows.ndim != 2:
            raise InvalidInput("data must be a 2-D array")
        n, p = rows.shape
        if n < 2 or p < 1:
            raise InvalidInput(f"need n >= 2 and p >= 1, got {rows.shape}")
        if not np.all(np.isfinite(rows)):
            raise InvalidInput("data has non-finite entries")
        labels = tuple(self.labels) if self.labels else tuple(f"V{j + 1}" for j in range(p))
        if len(labels) != p:
            raise InvalidInput(f"{len(labels)} labels for {p} columns")
        rows.setflags(write=False)
        means = rows.mean(axis=0)
        means.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "column_means", means)

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def p(self) -> int:
        return self.rows.shape[1]

    def centered(self) -> NDArray[np.float64]:
        return self.rows - self.column_means

    def sample_covariance(self) -> NDArray[np.float64]:
        """Sample covariance with divisor n."""
        xc = self.centered()
        s = xc.T @ xc / self.n
        return 0.5 * (s + s.T)


@dataclass(frozen=True)
class CholeskyFactors:
    L: NDArray[np.float64]
    D: NDArray[np.float64]
    ordering: Permutation

    @property
    def dim(self) -> int:
        return self.D.shape[0]


def reconstruct(factors: CholeskyFactors) -> NDArray[np.float64]:
    """``L diag(D) L^T`` in the permuted ordering."""
    L = factors.L
    s = (L * factors.D) @ L.T
    return 0.5 * (s + s.T)


# ---------------------------------------------------------------------------
# lasso

def _gram_system(Z, y, standardize):
    """Gram matrix, cross products and per-column scale of a centered design.

    Columns whose SD is negligible get scale 0 and are dropped from the fit.
    """
    n = Z.shape[0]
    G = Z.T @ Z
    c = Z.T @ y
    sq = np.diag(G).copy()
    ref = max(float(sq.max()), float(y @ y), 1e-300)
    keep = sq > (_SD_EPS ** 2) * ref
    if standardize:
        sd = np.where(keep, np.sqrt(np.where(keep, sq, 1.0) / n), 0.0)
    else:
        sd = np.where(keep, 1.0, 0.0)
    inv = np.where(keep, 1.0 / np.where(keep, sd, 1.0), 0.0)
    G = G * np.outer(inv, inv)
    c = c * inv
    return G, c, inv


def _tol(config: LassoConfig, yy: float, polish: bool = False) -> float:
    # sweep stops once max_j G_jj * delta_j^2 < coord_tol * y'y
    t = config.coord_tol ** 2 if polish else config.coord_tol
    return t * max(yy, 1e-300)


def lasso_kkt_residual(y: ArrayLike, Z: ArrayLike, beta: ArrayLike, lam: float,
                       standardize: bool = False) -> float:
    """Largest violation of the lasso optimality conditions at ``beta``.

    With ``standardize`` the conditions are those of the unit-SD design.
    """
    y = np.asarray(y, dtype=np.float64)
    Z = np.asarray(Z, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    r = y - Z @ beta
    g = 2.0 * (Z.T @ r)
    scale = np.ones_like(beta)
    if standardize:
        scale = np.sqrt(np.sum(Z * Z, axis=0) / Z.shape[0])
    worst = 0.0
    for j in range(beta.size):
        if scale[j] <= 0.0:
            continue
        gj = g[j] / scale[j]
        if beta[j] == 0.0:
            worst = max(worst, abs(gj) - lam)
        else:
            worst = max(worst, abs(gj - lam * np.sign(beta[j])))
    return max(worst, 0.0)


def lasso_fit(y: ArrayLike, Z: ArrayLike, lam: float, config: LassoConfig | None = None
              ) -> NDArray[np.float64]:
    """Coefficients minimizing ``||y - Z b||^2 + lam * ||b||_1`` (no intercept).

    ``lam == 0`` returns the minimum-norm least-squares solution.
    """
    config = config or LassoConfig()
    y = np.asarray(y, dtype=np.float64)
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim != 2 or Z.shape[0] != y.shape[0] or Z.shape[1] < 1:
        raise InvalidInput(f"incompatible shapes y {y.shape}, Z {Z.shape}")
    if lam < 0 or not np.isfinite(lam):
        raise InvalidInput("lambda must be a finite nonnegative number")
    if not (np.all(np.isfinite(Z)) and np.all(np.isfinite(y))):
        raise InvalidInput("non-finite regression data")
    if lam == 0.0:
        return np.linalg.lstsq(Z, y, rcond=None)[0]
    G, c, inv = _gram_system(Z, y, config.standardize)
    gamma, failed = cd_path(G, c, np.array([float(lam)]), np.zeros(c.size),
                               config.max_iter, _tol(config, float(y @ y), polish=True))
    beta = gamma[-1] * inv
    if failed >= 0:
        kkt = lasso_kkt_residual(y, Z, beta, lam, config.standardize)
        if kkt > 1e-6 * (1.0 + float(y @ y)):
            raise ConvergenceFailure("lasso coordinate descent did not converge",
                                     last_iterate=beta, kkt_residual=kkt)
    return beta


def lambda_path(y, Z, config: LassoConfig) -> NDArray[np.float64]:
    """Geometric path from ``2 max|Z'(y - mean y)|`` down by ``lambda_min_ratio``."""
    y = np.asarray(y, dtype=np.float64)
    Z = np.asarray(Z, dtype=np.float64)
    _, c, _ = _gram_system(Z, y - y.mean(), config.standardize)
    lam_max = 2.0 * float(np.max(np.abs(c))) if c.size else 0.0
    if lam_max <= 0.0:
        return np.zeros(1)
    ratio = config.min_ratio(Z.shape[0], Z.shape[1])
    return lam_max * np.geomspace(1.0, ratio, config.path_length)


def fold_ids(n: int, config: LassoConfig) -> NDArray[np.intp]:
    rng = np.random.default_rng(config.cv_seed)
    return rng.permutation(n) % config.cv_folds


def _cv_errors(y, Z, lambdas, folds, config):
    n = y.shape[0]
    err = np.zeros(lambdas.size)
    for k in range(config.cv_folds):
        test = folds == k
        train = ~test
        n_tr = int(train.sum())
        Zt, yt = Z[train], y[train]
        zm, ym = Zt.mean(axis=0), yt.mean()
        G, c, inv = _gram_system(Zt - zm, yt - ym, config.standardize)
        # per-observation penalty held fixed across training-set sizes
        yy = float((yt - ym) @ (yt - ym))
        gammas, _ = cd_path(G, c, lambdas * (n_tr / n), np.zeros(c.size), config.max_iter,
                            _tol(config, yy))
        betas = gammas * inv
        pred = ym + (Z[test] - zm) @ betas.T
        err += np.sum((y[test][:, None] - pred) ** 2, axis=0)
    return err / n


def _select_and_fit(y, Z, config: LassoConfig, folds):
    if Z.shape[1] == 0:
        return 0.0, np.zeros(0)
    lambdas = lambda_path(y, Z, config)
    if lambdas[0] == 0.0:
        return 0.0, np.zeros(Z.shape[1])
    if Z.shape[0] < config.cv_folds:
        raise InvalidInput(f"n={Z.shape[0]} smaller than cv_folds={config.cv_folds}")
    err = _cv_errors(y, Z, lambdas, folds, config)
    best = int(np.argmin(err))  # first minimum = largest lambda on ties
    G, c, inv = _gram_system(Z, y, config.standardize)
    gammas, failed = cd_path(G, c, lambdas[:best + 1], np.zeros(c.size), config.max_iter,
                             _tol(config, float(y @ y)))
    beta = gammas[-1] * inv
    lam = float(lambdas[best])
    if failed >= 0:
        kkt = lasso_kkt_residual(y, Z, beta, lam, config.standardize)
        if kkt > 1e-6 * (1.0 + float(y @ y)):
            raise ConvergenceFailure("lasso coordinate descent did not converge",
                                     last_iterate=beta, kkt_residual=kkt)
    return lam, beta


def select_lambda(y: ArrayLike, Z: ArrayLike, config: LassoConfig | None = None) -> float:
    """Cross-validated lambda from the geometric path; ties go to the larger value."""
    config = config or LassoConfig()
    y = np.asarray(y, dtype=np.float64)
    Z = np.asarray(Z, dtype=np.float64).reshape(y.shape[0], -1)
    return _select_and_fit(y, Z, config, fold_ids(y.shape[0], config))[0]


# ---------------------------------------------------------------------------
# decomposition

def mcd_fit(data: DataMatrix, ordering: Permutation, config: LassoConfig | None = None,
            penalized: bool = True) -> CholeskyFactors:
    """Sequential-regression Cholesky factors of ``data`` under ``ordering``.

    Columns are centered first; residual variances use divisor n and are
    floored at ``1e-10 * trace(S) / p``. Unpenalized fits use least squares.
    """
    config = config or LassoConfig()
    if ordering.size != data.p:
        raise InvalidInput(f"ordering of size {ordering.size} for p={data.p}")
    X = data.centered()[:, ordering.as_array()]
    n, p = X.shape
    trace = float(np.sum(X * X)) / n
    d_floor = D_FLOOR_RTOL * trace / p if trace > 0 else D_FLOOR_RTOL
    folds = fold_ids(n, config)

    L = np.eye(p)
    D = np.empty(p)
    E = np.empty((n, p))
    E[:, 0] = X[:, 0]
    D[0] = max(float(X[:, 0] @ X[:, 0]) / n, d_floor)
    for j in range(1, p):
        y = X[:, j]
        Z = E[:, :j]
        try:
            if penalized:
                _, beta = _select_and_fit(y, Z, config, folds)
            else:
                beta = np.linalg.lstsq(Z, y, rcond=None)[0]
        except ConvergenceFailure as exc:
            exc.index = j
            raise
        L[j, :j] = beta
        e = y - Z @ beta
        E[:, j] = e
        D[j] = max(float(e @ e) / n, d_floor)
    return CholeskyFactors(L=L, D=D, ordering=ordering)
