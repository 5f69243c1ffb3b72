from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, TypeVar

from threadpoolctl import threadpool_limits

T = TypeVar("T")
R = TypeVar("R")

THREADS_ENV = "CHOLENSEMBLE_THREADS"


def resolve_threads(threads: int | str | None) -> int:
    """``None`` falls back to $CHOLENSEMBLE_THREADS, then 1; ``"auto"`` means cpu count."""
    if threads is None:
        threads = os.environ.get(THREADS_ENV, "1")
    if isinstance(threads, str):
        threads = os.cpu_count() or 1 if threads.strip().lower() == "auto" else int(threads)
    if threads < 1:
        raise ValueError("threads must be >= 1")
    return threads


def _init_worker():
    threadpool_limits(1)


def pmap(fn: Callable[[T], R], items: Iterable[T], threads: int = 1) -> list[R]:
    """Ordered map; worker processes when ``threads > 1``.

    BLAS is pinned to one thread everywhere so results do not depend on the
    worker count.
    """
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        with threadpool_limits(1):
            return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(threads, len(items)), initializer=_init_worker) as ex:
        return list(ex.map(fn, items))
