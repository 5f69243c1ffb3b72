"""Expanding-window minimum-variance portfolio backtest."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import partial
from typing import Callable

import numpy as np
from numpy.typing import NDArray

from ._parallel import pmap
from .errors import CholEnsembleError, InvalidInput, StageError
from .io_csv import read_labeled_csv
from .mcd import DataMatrix, LassoConfig
from .simplex_qp import SimplexQP, solve
from .wae_ensemble import DEFAULT_M, METHODS, build_candidates, ensemble_from_candidates, \
    sample_orderings

ESTIMATORS = (*METHODS, "sample_ridge")
ZERO_VARIANCE_RTOL = 1e-12


@dataclass(frozen=True)
class ReturnSeries:
    returns: NDArray[np.float64]
    period_labels: tuple[str, ...] = ()
    asset_labels: tuple[str, ...] = ()

    def __post_init__(self):
        r = np.array(self.returns, dtype=np.float64)
        if r.ndim != 2 or r.shape[0] < 2 or r.shape[1] < 1:
            raise InvalidInput(f"returns must be T x p with T >= 2, got {r.shape}")
        if not np.all(np.isfinite(r)):
            raise InvalidInput("returns contain non-finite entries")
        T, p = r.shape
        periods = tuple(self.period_labels) or tuple(str(t + 1) for t in range(T))
        assets = tuple(self.asset_labels) or tuple(f"A{j + 1}" for j in range(p))
        if len(periods) != T or len(assets) != p:
            raise InvalidInput("label counts do not match the returns shape")
        r.setflags(write=False)
        object.__setattr__(self, "returns", r)
        object.__setattr__(self, "period_labels", periods)
        object.__setattr__(self, "asset_labels", assets)

    @property
    def T(self) -> int:
        return self.returns.shape[0]

    @property
    def p(self) -> int:
        return self.returns.shape[1]


def read_returns_csv(text: str) -> ReturnSeries:
    """Returns CSV: header of asset labels, optional leading period-label column."""
    values, periods, assets = read_labeled_csv(text)
    return ReturnSeries(values, tuple(periods), tuple(assets))


@dataclass(frozen=True)
class EstimatorConfig:
    """Covariance strategy used at each backtest step."""

    method: str = "wae"
    M: int = DEFAULT_M
    seed: int = 0
    lasso: LassoConfig = LassoConfig()
    xi_grid: NDArray[np.float64] | None = None
    ridge: float = 1e-8

    def __post_init__(self):
        if self.method not in ESTIMATORS:
            raise InvalidInput(f"unknown estimator {self.method!r}; expected one of {ESTIMATORS}")


def estimate_covariance(window: NDArray[np.float64], config: EstimatorConfig, step: int
                        ) -> NDArray[np.float64]:
    data = DataMatrix(window)
    if config.method == "sample_ridge":
        s = data.sample_covariance()
        return s + config.ridge * np.eye(data.p)
    seed = int(np.random.SeedSequence([config.seed, step]).generate_state(1)[0])
    orderings = sample_orderings(data.p, config.M, seed)
    cands = build_candidates(data, orderings, config.lasso)
    return ensemble_from_candidates(data, cands, (config.method,), config.xi_grid)[
        config.method].sigma_hat


def min_variance_weights(sigma) -> NDArray[np.float64]:
    """Long-only, fully invested weights minimizing ``w' sigma w``."""
    return solve(SimplexQP.from_arrays(sigma)).weights


@dataclass
class BacktestReport:
    method: str
    period_labels: list[str]
    weekly_returns: NDArray[np.float64]
    weight_history: NDArray[np.float64]
    insample_variance: NDArray[np.float64]
    equal_weight_variance: NDArray[np.float64]
    compound: bool = False

    @property
    def awr(self) -> float:
        return float(np.mean(self.weekly_returns))

    @property
    def se(self) -> float:
        """Sample SD (divisor H-1) of the realized returns."""
        return float(np.std(self.weekly_returns, ddof=1)) if self.weekly_returns.size > 1 else 0.0

    @property
    def zero_variance(self) -> bool:
        # weights sum to 1 only up to rounding, so a constant series leaves ~eps noise
        scale = float(np.max(np.abs(self.weekly_returns))) if self.weekly_returns.size else 0.0
        return self.se <= ZERO_VARIANCE_RTOL * scale

    @property
    def info_ratio(self) -> float:
        if self.zero_variance:
            return math.inf
        return self.awr / self.se

    @property
    def cumulative_returns(self) -> NDArray[np.float64]:
        if self.compound:
            return np.cumprod(1.0 + self.weekly_returns) - 1.0
        return np.cumsum(self.weekly_returns)

    def to_json_dict(self) -> dict:
        return {
            "method": self.method,
            "awr": self.awr,
            "se": self.se,
            "info_ratio": None if self.zero_variance else self.info_ratio,
            "zero_variance": self.zero_variance,
            "steps": len(self.weekly_returns),
            "periods": list(self.period_labels),
            "weekly_returns": [float(x) for x in self.weekly_returns],
            "cumulative_returns": [float(x) for x in self.cumulative_returns],
            "cumulation": "compound" if self.compound else "additive",
            "weights": [[float(x) for x in row] for row in self.weight_history],
        }


def _step(j, series: ReturnSeries, estimator: Callable, config):
    try:
        sigma = estimator(series.returns[:j], config, j)
        w = min_variance_weights(sigma)
    except CholEnsembleError as exc:
        raise StageError("backtest step", exc, index=j) from exc
    p = series.p
    eq = np.full(p, 1.0 / p)
    return w, float(w @ series.returns[j]), float(w @ sigma @ w), float(eq @ sigma @ eq)


def backtest(series: ReturnSeries, config: EstimatorConfig, window_start: int,
             *, compound: bool = False, threads: int = 1,
             estimator: Callable = estimate_covariance) -> BacktestReport:
    """Estimate from rows ``[0, j)`` and hold the resulting weights over row ``j``.

    ``j`` runs from ``window_start`` to ``T - 1``, giving ``T - window_start``
    realized returns.
    """
    if not 2 <= window_start < series.T:
        raise InvalidInput(f"window_start must satisfy 2 <= window_start < T={series.T}")
    steps = list(range(window_start, series.T))
    fn = partial(_step, series=series, estimator=estimator, config=config)
    results = pmap(fn, steps, threads)
    realized = np.array([r[1] for r in results])
    if not np.all(np.isfinite(realized)):
        raise InvalidInput("non-finite realized return")
    return BacktestReport(
        method=config.method,
        period_labels=[series.period_labels[j] for j in steps],
        weekly_returns=realized,
        weight_history=np.array([r[0] for r in results]),
        insample_variance=np.array([r[2] for r in results]),
        equal_weight_variance=np.array([r[3] for r in results]),
        compound=compound,
    )
