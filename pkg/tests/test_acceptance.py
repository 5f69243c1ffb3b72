"""End-to-end acceptance checks.

Each test prints one ``CRITERION k: PASS|FAIL`` line; the lines are also
collected into the terminal summary.  Run with ``pytest tests/test_acceptance.py``
(about 10 minutes on one core).
"""

from __future__ import annotations

import itertools
import time

import numpy as np
import pytest

from cholensemble.cli import main
from cholensemble.io_csv import fmt
from cholensemble.linalg_core import Permutation, conjugate
from cholensemble.mcd import DataMatrix, mcd_fit, reconstruct
from cholensemble.portfolio import EstimatorConfig, ReturnSeries, backtest, estimate_covariance
from cholensemble.simlab import (ExperimentSetup, SamplerSpec, ScenarioSpec, make_scenario,
                                 run_experiment, sample)
from cholensemble.simplex_qp import SimplexQP, solve
from cholensemble.wae_ensemble import (CandidateEstimate, build_candidates,
                                       ensemble_from_candidates, estimate_quadratic,
                                       sample_orderings)

from conftest import grid_min, random_pd

RESULTS: list[str] = []
WORKERS = 8


def report(k: int, ok: bool, detail: str) -> None:
    line = f"CRITERION {k}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS.append(line)
    print(line)


def check(k: int, ok: bool, detail: str) -> None:
    report(k, bool(ok), detail)
    assert ok, detail


# shared runs --------------------------------------------------------------

TABLE1_SETUP = dict(n=50, p=50, M=30, methods=("equal", "wae", "wae_star"), replications=20)
REFERENCE_F = {1: {"wae": 3.43, "equal": 4.36}, 7: {"wae": 15.6, "equal": 23.0}}


@pytest.fixture(scope="module")
def table1_runs():
    """Scenario-1 and Scenario-7 at (50, 50, 30), 20 paired replications, 8 workers."""
    runs = {}
    for sid in (1, 7):
        setup = ExperimentSetup(scenario=sid, seed=2000 + sid, **TABLE1_SETUP)
        t0 = time.perf_counter()
        runs[sid] = (setup, run_experiment(setup, threads=WORKERS), time.perf_counter() - t0)
    return runs


@pytest.fixture(scope="module")
def criterion5_sigmas():
    """(min eigenvalue of A, max diag of A, min eigenvalue per method) for 50 fits."""
    out = []
    for s in range(50):
        p = 20 if s % 2 == 0 else 50
        data = sample(SamplerSpec("normal", make_scenario(ScenarioSpec(1 + s % 7, p)), 50,
                                  5000 + s))
        cands = build_candidates(data, sample_orderings(p, 10, 6000 + s))
        A = estimate_quadratic(data, cands).A
        res = ensemble_from_candidates(data, cands)
        out.append((float(np.linalg.eigvalsh(A)[0]), float(np.diag(A).max()),
                    {m: float(np.linalg.eigvalsh(r.sigma_hat)[0]) for m, r in res.items()}))
    return out


# 1 -------------------------------------------------------------------------

def test_criterion_1_exact_reconstruction():
    rng = np.random.default_rng(1)
    data = DataMatrix(rng.normal(size=(100, 10)) @ random_pd(rng, 10))
    S = data.sample_covariance()
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(20):
        perm = Permutation(tuple(rng.permutation(10)))
        est = conjugate(reconstruct(mcd_fit(data, perm, penalized=False)), perm)
        worst = max(worst, np.linalg.norm(est - S) / np.linalg.norm(S))
    elapsed = time.perf_counter() - t0
    check(1, worst < 1e-10 and elapsed < 5,
          f"max rel Frobenius error {worst:.2e} (< 1e-10), {elapsed:.2f}s (< 5s)")


# 2 -------------------------------------------------------------------------

def test_criterion_2_qp_grid_oracle():
    t0 = time.perf_counter()
    worst = -np.inf
    for s in range(50):
        rng = np.random.default_rng(200 + s)
        Q, c = random_pd(rng, 3), rng.normal(size=3)
        res = solve(SimplexQP.from_arrays(Q, c))
        worst = max(worst, res.objective - grid_min(Q, c, 3, step=1e-3))
    elapsed = time.perf_counter() - t0
    check(2, worst <= 1e-4 and elapsed < 30,
          f"max (active set - grid) objective gap {worst:.2e} (<= 1e-4), {elapsed:.2f}s (< 30s)")


# 3 -------------------------------------------------------------------------

def l1_penalized_weights(Q, c, phi):
    # phi * sum|w_i| restricted to the simplex (w >= 0) is phi * 1'w
    return solve(SimplexQP.from_arrays(Q, c + phi * np.ones(c.size))).weights


def test_criterion_3_penalty_equivalence():
    worst = 0.0
    for s in range(20):
        rng = np.random.default_rng(300 + s)
        M = int(rng.integers(2, 12))
        B = rng.normal(size=(M, int(rng.integers(1, M + 1))))
        Q, c = B @ B.T + 1e-3 * np.eye(M), rng.normal(size=M)
        base = solve(SimplexQP.from_arrays(Q, c)).weights
        for phi in (0.0, 0.1, 1.0, 10.0):
            worst = max(worst, float(np.abs(l1_penalized_weights(Q, c, phi) - base).max()))
    check(3, worst <= 1e-8, f"max weight difference {worst:.2e} over 20 x 4 (<= 1e-8)")


# 4 -------------------------------------------------------------------------

def test_criterion_4_naive_loop():
    rng = np.random.default_rng(4)
    n, p, M = 10, 2, 2
    x = rng.normal(size=(n, p))
    sigmas = [random_pd(rng, p) for _ in range(M)]
    cands = [CandidateEstimate(s, Permutation.identity(p), None) for s in sigmas]
    quad = estimate_quadratic(DataMatrix(x), cands)
    m = x.mean(axis=0)
    S = np.zeros((p, p))
    for i in range(p):
        for j in range(p):
            S[i, j] = sum((x[t, i] - m[i]) * (x[t, j] - m[j]) for t in range(n)) / n
    A = np.zeros((M, M))
    b = np.zeros(M)
    for k in range(M):
        for i in range(p):
            for j in range(p):
                b[k] -= 2 * sigmas[k][i, j] * S[i, j]
        for l in range(M):
            for i in range(p):
                for j in range(p):
                    rho = 0.0
                    for t in range(n):
                        u = (x[t, i] - m[i]) * (x[t, j] - m[j])
                        rho += (u - sigmas[k][i, j]) * (u - sigmas[l][i, j])
                    A[k, l] += rho / n / n + sigmas[k][i, j] * sigmas[l][i, j]
    err = max(np.abs(quad.A - A).max(), np.abs(quad.b - b).max())
    check(4, err <= 1e-12, f"max abs deviation from quadruple loop {err:.2e} (<= 1e-12)")


# 5, 6 ----------------------------------------------------------------------

def test_criterion_5_psd_quadratic(criterion5_sigmas):
    ratios = [lam / dmax for lam, dmax, _ in criterion5_sigmas]
    worst = min(ratios)
    check(5, worst >= -1e-6, f"min lambda_min(A)/max diag(A) over 50 fits {worst:.2e} (>= -1e-6)")


def test_criterion_6_pd_closure(criterion5_sigmas, table1_runs):
    eigs = [e for _, _, d in criterion5_sigmas for e in d.values()]
    for _, rep, _ in table1_runs.values():
        eigs += [e for r in rep.replications for e in r.min_eigenvalue.values()]
    worst = min(eigs)
    check(6, worst > 0, f"smallest eigenvalue over {len(eigs)} estimates {worst:.3e} (> 0)")


# 7, 8 ----------------------------------------------------------------------

def test_criterion_7_table1(table1_runs):
    parts, ok = [], True
    for sid, (_, rep, elapsed) in table1_runs.items():
        summ = rep.summary()
        f_wae, f_eq = summ["wae"]["F"][0], summ["equal"]["F"][0]
        ratio = f_wae / f_eq
        near = abs(f_wae / REFERENCE_F[sid]["wae"] - 1) <= 0.3
        ok &= ratio <= 0.95 and near
        parts.append(f"S{sid}: F wae {f_wae:.2f} vs equal {f_eq:.2f} (ratio {ratio:.3f}, "
                     f"reference wae {REFERENCE_F[sid]['wae']}, within 30%: {near}, {elapsed:.0f}s)")
    check(7, ok, "; ".join(parts))


def test_criterion_8_table2_sparsity(table1_runs):
    summ = table1_runs[1][1].summary()
    nz_wae, nz_star = summ["wae"]["nonzero"][0], summ["wae_star"]["nonzero"][0]
    ok = nz_star < nz_wae and 2 <= nz_star <= 15 and 2 <= nz_wae <= 15
    check(8, ok, f"S1 mean nonzero weights wae {nz_wae:.2f}, wae_star {nz_star:.2f} "
                 f"(reference 7.12 vs 3.68)")


# 9 -------------------------------------------------------------------------

def test_criterion_9_table3_case2():
    setup = ExperimentSetup(scenario=7, case="mixed_case_II", n=50, p=50, M=30,
                            methods=("equal", "wae"), replications=10, seed=9000)
    summ = run_experiment(setup, threads=WORKERS).summary()
    f_wae, f_eq = summ["wae"]["F"][0], summ["equal"]["F"][0]
    check(9, f_wae <= 0.95 * f_eq,
          f"S7 case II F wae {f_wae:.2f} vs equal {f_eq:.2f} (ratio {f_wae / f_eq:.3f} <= 0.95; "
          f"reference 17.0 vs 23.3)")


# 10 ------------------------------------------------------------------------

def test_criterion_10_consistency():
    means = []
    for n in (50, 100, 200, 400):
        setup = ExperimentSetup(scenario=2, n=n, p=30, M=30, methods=("wae",),
                                replications=10, seed=10_000 + n)
        means.append(run_experiment(setup, threads=WORKERS).summary()["wae"]["F"][0])
    ok = all(b < a for a, b in zip(means, means[1:]))
    check(10, ok, "mean F(wae) at n=50,100,200,400: " + ", ".join(f"{m:.3f}" for m in means))


# 11 ------------------------------------------------------------------------

def exact_min_variance(sigma):
    """Enumerate supports; the KKT point with w >= 0 and minimal variance wins."""
    p = sigma.shape[0]
    best, best_w = np.inf, None
    for size in range(1, p + 1):
        for supp in itertools.combinations(range(p), size):
            idx = list(supp)
            sub = sigma[np.ix_(idx, idx)]
            try:
                v = np.linalg.solve(sub, np.ones(size))
            except np.linalg.LinAlgError:
                continue
            if v.sum() <= 0:
                continue
            w_s = v / v.sum()
            if w_s.min() < -1e-14:
                continue
            w = np.zeros(p)
            w[idx] = np.maximum(w_s, 0.0)
            val = w @ sigma @ w
            if val < best - 1e-15:
                best, best_w = val, w
    return best_w


def portfolio_series(T=104, p=10, seed=11):
    rng = np.random.default_rng(seed)
    B = np.eye(p) + np.tril(rng.normal(0, 0.3, (p, p)), -1)
    sigma = (B @ B.T) * 4e-4
    return ReturnSeries(rng.multivariate_normal(np.full(p, 2e-3), sigma, size=T)), sigma


def test_criterion_11_portfolio_oracle():
    series, _ = portfolio_series()
    config = EstimatorConfig("wae", M=30, seed=11)
    sigmas = {}

    def recording(window, cfg, step):
        sigmas[step] = estimate_covariance(window, cfg, step)
        return sigmas[step]

    rep = backtest(series, config, 52, estimator=recording)
    ref = []
    for j in range(52, series.T):
        w = exact_min_variance(sigmas[j])
        ref.append(float(w @ series.returns[j]))
    awr_err = abs(rep.awr - float(np.mean(ref)))
    W = rep.weight_history
    simplex = bool(np.all(W >= 0) and np.all(np.abs(W.sum(axis=1) - 1) <= 1e-10))
    beats = bool(np.all(rep.insample_variance <= rep.equal_weight_variance))
    ok = awr_err <= 1e-10 and simplex and beats and len(ref) == 52
    check(11, ok, f"|AWR - reference| {awr_err:.2e} (<= 1e-10), steps {len(ref)}, "
                  f"simplex {simplex}, beats equal weights {beats}")


# 12 ------------------------------------------------------------------------

def test_criterion_12_determinism(table1_runs, tmp_path):
    same = []
    for sid, (setup, rep8, _) in table1_runs.items():
        rep1 = run_experiment(setup, threads=1)
        same.append(rep8.to_csv().encode() == rep1.to_csv().encode())
    series, _ = portfolio_series()
    lines = ["week," + ",".join(series.asset_labels)]
    lines += [f"w{t}," + ",".join(fmt(v) for v in row)
              for t, row in zip(series.period_labels, series.returns)]
    src = tmp_path / "returns.csv"
    src.write_text("\n".join(lines) + "\n")
    outs = []
    for threads in (1, WORKERS):
        out = tmp_path / f"bt{threads}"
        code = main(["backtest", str(src), "--methods", "equal,wae", "--window", "52",
                     "--seed", "11", "--threads", str(threads), "--out-dir", str(out)])
        assert code == 0
        outs.append({f.name: f.read_bytes() for f in sorted(out.iterdir())})
    same.append(outs[0] == outs[1] and len(outs[0]) == 5)
    check(12, all(same), f"identical bytes for 1 vs {WORKERS} workers: S1 report {same[0]}, "
                         f"S7 report {same[1]}, backtest files {same[2]}")
