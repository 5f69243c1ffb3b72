from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cholensemble.errors import InfeasibleProblem, InvalidInput
from cholensemble.simplex_qp import SimplexQP, kkt_residual, solve, solve_penalized

from conftest import grid_min, random_pd


def test_identity_symmetric():
    np.testing.assert_allclose(solve(SimplexQP.from_arrays(np.eye(2))).weights, [0.5, 0.5])


def test_diagonal_closed_form():
    w = solve(SimplexQP.from_arrays(np.diag([1.0, 2.0]))).weights
    np.testing.assert_allclose(w, [2 / 3, 1 / 3], atol=1e-12)


def test_grid_oracle_random(rng):
    for _ in range(10):
        Q, c = random_pd(rng, 3), rng.normal(size=3)
        res = solve(SimplexQP.from_arrays(Q, c))
        assert res.objective - grid_min(Q, c, 3) <= 1e-4
        assert res.kkt_residual <= 1e-8 * (1 + np.max(np.abs(c)))


def test_singular_quad_min_norm_tie_break():
    w = solve(SimplexQP.from_arrays(np.ones((5, 5)))).weights
    np.testing.assert_allclose(w, np.full(5, 0.2), atol=1e-12)
    w = solve(SimplexQP.from_arrays(np.zeros((4, 4)), [1.0, 0.0, 0.0, 2.0])).weights
    np.testing.assert_allclose(w, [0, 0.5, 0.5, 0], atol=1e-12)


def test_single_candidate():
    assert solve(SimplexQP.from_arrays([[3.0]], [1.0])).weights.tolist() == [1.0]


def test_indefinite_quad_gets_ridge(rng):
    res = solve(SimplexQP.from_arrays(np.diag([1.0, -0.5, 2.0]), rng.normal(size=3)))
    assert res.ridge_applied > 0.5
    assert res.weights.min() >= 0 and abs(res.weights.sum() - 1) < 1e-12


def test_rejects_non_finite():
    with pytest.raises(InvalidInput):
        SimplexQP.from_arrays([[1.0, np.nan], [np.nan, 1.0]])
    with pytest.raises(InvalidInput):
        SimplexQP.from_arrays(np.eye(2), [1.0, np.inf])


def test_penalized_xi_zero_matches_solve(rng):
    Q, c = random_pd(rng, 4), rng.normal(size=4)
    qp = SimplexQP.from_arrays(Q, c)
    pen = solve_penalized(qp, rng.uniform(0, 3, 4), 0.0)
    np.testing.assert_allclose(pen.weights, solve(qp).weights, atol=1e-10)


def test_penalized_forced_exclusion():
    w = solve_penalized(SimplexQP.from_arrays(np.eye(2)), [0.0, np.inf], 1.0).weights
    assert w.tolist() == [1.0, 0.0]


def test_penalized_all_excluded():
    with pytest.raises(InfeasibleProblem):
        solve_penalized(SimplexQP.from_arrays(np.eye(2)), [np.inf, np.inf], 1.0)


def test_penalized_grid_oracle(rng):
    Q, c = random_pd(rng, 3), rng.normal(size=3)
    theta = rng.uniform(0.5, 3, 3)
    res = solve_penalized(SimplexQP.from_arrays(Q, c), theta, 0.5)
    w = res.weights
    full = w @ Q @ w + c @ w + 0.5 * theta @ w
    assert full - grid_min(Q, c, 3, penalty=0.5 * theta) <= 1e-4


def qp_instances(max_dim=3):
    return st.tuples(st.integers(0, 2**31), st.integers(1, max_dim))


@settings(max_examples=50, deadline=None)
@given(inst=qp_instances())
def test_property_grid_equivalence(inst):
    seed, M = inst
    rng = np.random.default_rng(seed)
    Q, c = random_pd(rng, M, 0.01), rng.normal(size=M) * rng.uniform(0.1, 10)
    res = solve(SimplexQP.from_arrays(Q, c))
    assert res.objective - grid_min(Q, c, M) <= 1e-4


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31), M=st.integers(1, 12), rank=st.integers(0, 12))
def test_property_kkt_certificate(seed, M, rank):
    rng = np.random.default_rng(seed)
    B = rng.normal(size=(M, min(rank, M)))
    Q, c = B @ B.T, rng.normal(size=M)
    res = solve(SimplexQP.from_arrays(Q, c))
    w = res.weights
    assert w.min() >= 0 and abs(w.sum() - 1) < 1e-10
    assert kkt_residual(Q, c, w) <= 1e-8 * (1 + np.max(np.abs(c))) * max(1, np.abs(Q).max())


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), M=st.integers(1, 8),
       scale=st.floats(1e-3, 1e3))
def test_property_scaling_invariance(seed, M, scale):
    rng = np.random.default_rng(seed)
    Q, c = random_pd(rng, M), rng.normal(size=M)
    a = solve(SimplexQP.from_arrays(Q, c)).weights
    b = solve(SimplexQP.from_arrays(scale * Q, scale * c)).weights
    np.testing.assert_allclose(a, b, atol=1e-8)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), M=st.integers(1, 8), phi=st.sampled_from([0, 0.1, 1, 10]))
def test_property_l1_term_is_constant_on_simplex(seed, M, phi):
    # phi * sum|w_i| equals phi on the simplex, so it shifts the objective only
    rng = np.random.default_rng(seed)
    Q, c = random_pd(rng, M), rng.normal(size=M)
    a = solve(SimplexQP.from_arrays(Q, c)).weights
    b = solve(SimplexQP.from_arrays(Q, c + phi * np.ones(M))).weights
    np.testing.assert_allclose(a, b, atol=1e-8)
