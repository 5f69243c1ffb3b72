from __future__ import annotations

import numpy as np
import pytest


def simplex_grid(M: int, step: float = 1e-3) -> np.ndarray:
    """Every point of the simplex whose coordinates are multiples of ``step`` (M <= 3)."""
    k = int(round(1 / step))
    if M == 1:
        return np.ones((1, 1))
    if M == 2:
        a = np.arange(k + 1) / k
        return np.column_stack([a, 1 - a])
    i, j = np.meshgrid(np.arange(k + 1), np.arange(k + 1), indexing="ij")
    keep = i + j <= k
    i, j = i[keep], j[keep]
    return np.column_stack([i, j, k - i - j]) / k


def grid_min(Q, c, M, penalty=None, step=1e-3) -> float:
    W = simplex_grid(M, step)
    vals = np.einsum("ni,ij,nj->n", W, Q, W) + W @ c
    if penalty is not None:
        vals = vals + W @ penalty
    return float(vals.min())


def random_pd(rng, p, jitter=0.1):
    a = rng.normal(size=(p, p))
    return a @ a.T + jitter * np.eye(p)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
