"""Simulation study: true covariance scenarios, samplers, losses, replicated runs."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import partial

import numpy as np
from numpy.typing import NDArray

from ._parallel import pmap
from .errors import CholEnsembleError, InvalidInput, StageError
from .io_csv import fmt
from .linalg_core import Permutation, cholesky_pd, conjugate, sym_eigen, sym_matrix
from .mcd import DataMatrix, LassoConfig
from .wae_ensemble import METHODS, build_candidates, ensemble_from_candidates, sample_orderings

SAMPLER_KINDS = ("normal", "t_case_I", "mixed_case_II")
T_DF = 4
CONTAMINATION_PROB = 0.1
CONTAMINATION_LOCATION = 5.0
LOSSES = ("F", "L2", "MAE")

REPORT_COLUMNS = ("scenario", "case", "n", "p", "M", "method", "loss", "mean", "se",
                  "mean_nonzero_weights", "reps", "seed", "truth_eig_min", "truth_eig_max")


@dataclass(frozen=True)
class ScenarioSpec:
    id: int
    p: int
    permutation_seed: int | None = None


@dataclass(frozen=True)
class SamplerSpec:
    kind: str
    sigma: NDArray[np.float64]
    n: int
    seed: int


@dataclass(frozen=True)
class LossReport:
    frobenius: float
    l2: float
    mae: float


def _banded_b(p: int, lag_weights: dict[int, float]) -> NDArray[np.float64]:
    B = np.eye(p)
    for lag, w in lag_weights.items():
        B += w * np.eye(p, k=-lag)
    return B


def make_scenario(spec: ScenarioSpec) -> NDArray[np.float64]:
    """True covariance matrix for scenarios 1-7.

    Scenario 3 permutes scenario 2 with ``permutation_seed`` (default 0);
    scenario 6 draws its unit-lower-triangular factor from ``permutation_seed``
    as well, with N(0, variance 0.2) entries.
    """
    p = spec.p
    if p < 1:
        raise InvalidInput("p must be >= 1")
    seed = 0 if spec.permutation_seed is None else spec.permutation_seed
    if spec.id == 1:
        return np.eye(p)
    if spec.id in (2, 3):
        B = _banded_b(p, {1: 0.8, 2: 0.6})
        sigma = B.T @ B
        if spec.id == 3:
            perm = Permutation(tuple(np.random.default_rng(seed).permutation(p)))
            sigma = conjugate(sigma, perm)
        return sym_matrix(sigma)
    if spec.id == 4:
        B = _banded_b(p, {1: 0.8, 2: 0.6, 3: 0.6, 4: 0.6, 5: 0.6})
        return sym_matrix(B.T @ B)
    if spec.id == 5:
        k = min(p, 20)
        sigma = np.eye(p)
        sigma[:k, :k] += 0.5 * (np.ones((k, k)) - np.eye(k))
        return sigma
    if spec.id == 6:
        rng = np.random.default_rng(seed)
        B = np.eye(p)
        il = np.tril_indices(p, -1)
        B[il] = rng.normal(0.0, math.sqrt(0.2), size=il[0].size)
        return sym_matrix(B @ B.T)
    if spec.id == 7:
        return 0.5 * np.eye(p) + 0.5 * np.ones((p, p))
    raise InvalidInput(f"unknown scenario id {spec.id}; expected 1..7")


def _draw(spec: SamplerSpec):
    if spec.kind not in SAMPLER_KINDS:
        raise InvalidInput(f"unknown sampler kind {spec.kind!r}")
    if spec.n < 2:
        raise InvalidInput("n must be >= 2")
    C = cholesky_pd(spec.sigma)
    p = C.shape[0]
    ss = np.random.SeedSequence(spec.seed)
    z_seq, g_seq, b_seq, tz_seq, tg_seq = ss.spawn(5)
    z = np.random.default_rng(z_seq).standard_normal((spec.n, p))
    x = z @ C.T
    flags = np.zeros(spec.n, dtype=bool)
    if spec.kind == "t_case_I":
        g = np.random.default_rng(g_seq).chisquare(T_DF, size=spec.n)
        x = x / np.sqrt(g / T_DF)[:, None]
    elif spec.kind == "mixed_case_II":
        flags = np.random.default_rng(b_seq).random(spec.n) < CONTAMINATION_PROB
        tz = np.random.default_rng(tz_seq).standard_normal((spec.n, p))
        tg = np.random.default_rng(tg_seq).chisquare(T_DF, size=spec.n)
        t_rows = CONTAMINATION_LOCATION + tz / np.sqrt(tg / T_DF)[:, None]
        x = np.where(flags[:, None], t_rows, x)
    return x, flags


def sample(spec: SamplerSpec) -> DataMatrix:
    """Draw ``n`` rows from the sampler; deterministic in ``spec.seed``."""
    return DataMatrix(_draw(spec)[0])


def contamination_flags(spec: SamplerSpec) -> NDArray[np.bool_]:
    """Rows drawn from the t component in a ``mixed_case_II`` sample."""
    return _draw(spec)[1]


def losses(estimate, truth, l2_abs: bool = False) -> LossReport:
    """Frobenius, L2 (largest signed eigenvalue of the difference) and MAE losses.

    ``l2_abs`` switches L2 to the spectral norm ``max |eig|``.
    """
    est = np.asarray(estimate, dtype=np.float64)
    tru = np.asarray(truth, dtype=np.float64)
    if est.shape != tru.shape or est.ndim != 2:
        raise InvalidInput(f"dimension mismatch {est.shape} vs {tru.shape}")
    diff = est - tru
    vals = sym_eigen(diff).values
    l2 = float(np.max(np.abs(vals))) if l2_abs else float(vals[0])
    return LossReport(float(np.linalg.norm(diff)), l2, float(np.mean(np.abs(diff))))


@dataclass
class ExperimentSetup:
    scenario: int
    case: str = "normal"
    n: int = 50
    p: int = 50
    M: int = 30
    methods: tuple[str, ...] = ("equal", "wae", "wae_star")
    replications: int = 50
    seed: int = 0
    lasso: LassoConfig = field(default_factory=LassoConfig)
    xi_grid: NDArray[np.float64] | None = None
    l2_abs: bool = False
    scenario_seed: int | None = None


@dataclass
class ReplicationResult:
    index: int
    seed: int
    losses: dict[str, LossReport]
    nonzero: dict[str, int]
    xi: float | None
    min_eigenvalue: dict[str, float] = field(default_factory=dict)


@dataclass
class ExperimentReport:
    setup: ExperimentSetup
    replications: list[ReplicationResult]
    truth_eigenvalues: NDArray[np.float64]

    def summary(self) -> dict[str, dict[str, tuple[float, float]]]:
        """``{method: {loss: (mean, se)}}`` plus ``"nonzero"`` per method."""
        out: dict[str, dict[str, tuple[float, float]]] = {}
        reps = len(self.replications)
        for m in self.setup.methods:
            cols = {
                "F": [r.losses[m].frobenius for r in self.replications],
                "L2": [r.losses[m].l2 for r in self.replications],
                "MAE": [r.losses[m].mae for r in self.replications],
                "nonzero": [float(r.nonzero[m]) for r in self.replications],
            }
            out[m] = {k: (float(np.mean(v)), float(np.std(v, ddof=1) / math.sqrt(reps)))
                      for k, v in cols.items()}
        return out

    def rows(self) -> list[dict]:
        s = self.setup
        summ = self.summary()
        out = []
        for m in s.methods:
            for loss in LOSSES:
                mean, se = summ[m][loss]
                out.append({
                    "scenario": s.scenario, "case": s.case, "n": s.n, "p": s.p, "M": s.M,
                    "method": m, "loss": loss, "mean": mean, "se": se,
                    "mean_nonzero_weights": summ[m]["nonzero"][0], "reps": len(self.replications),
                    "seed": s.seed,
                    "truth_eig_min": float(self.truth_eigenvalues[-1]),
                    "truth_eig_max": float(self.truth_eigenvalues[0]),
                })
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for row in self.rows():
            w.writerow([fmt(row[c]) for c in REPORT_COLUMNS])
        return buf.getvalue()

    def table(self) -> str:
        """Plain-text loss x method table of ``mean(se)``."""
        summ = self.summary()
        methods = self.setup.methods
        width = max(14, *(len(m) + 2 for m in methods))
        lines = ["loss".ljust(8) + "".join(m.rjust(width) for m in methods)]
        for loss in (*LOSSES, "nonzero"):
            cells = [f"{summ[m][loss][0]:.3f}({summ[m][loss][1]:.3f})" for m in methods]
            lines.append(loss.ljust(8) + "".join(c.rjust(width) for c in cells))
        return "\n".join(lines)


def _replication(args, setup: ExperimentSetup, sigma):
    index, seq = args
    data_seq, order_seq = seq.spawn(2)
    data_seed = int(data_seq.generate_state(1)[0])
    order_seed = int(order_seq.generate_state(1)[0])
    try:
        data = sample(SamplerSpec(setup.case, sigma, setup.n, data_seed))
        orderings = sample_orderings(setup.p, setup.M, order_seed)
        cands = build_candidates(data, orderings, setup.lasso)
        res = ensemble_from_candidates(data, cands, setup.methods, setup.xi_grid)
    except CholEnsembleError as exc:
        raise StageError("replication", exc, index=index) from exc
    return ReplicationResult(
        index, data_seed,
        {m: losses(r.sigma_hat, sigma, setup.l2_abs) for m, r in res.items()},
        {m: r.nonzero_weight_count for m, r in res.items()},
        res["wae_star"].xi_selected if "wae_star" in res else None,
        {m: float(sym_eigen(r.sigma_hat).values[-1]) for m, r in res.items()},
    )


def run_experiment(setup: ExperimentSetup, threads: int = 1) -> ExperimentReport:
    """Replicated paired comparison: every method sees the same data and orderings."""
    if setup.replications < 2:
        raise InvalidInput("replications must be >= 2")
    unknown = set(setup.methods) - set(METHODS)
    if unknown:
        raise InvalidInput(f"unknown method(s): {sorted(unknown)}")
    sigma = make_scenario(ScenarioSpec(setup.scenario, setup.p, setup.scenario_seed))
    seqs = np.random.SeedSequence(setup.seed).spawn(setup.replications)
    fn = partial(_replication, setup=setup, sigma=sigma)
    reps = pmap(fn, list(enumerate(seqs)), threads)
    return ExperimentReport(setup, reps, sym_eigen(sigma).values)
