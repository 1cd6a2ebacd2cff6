"""Bounded thread pool for independent per-level computations."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence

ENV_WORKERS = "SPECLAB_WORKERS"


def worker_count(task_count: int) -> int:
    env = os.environ.get(ENV_WORKERS)
    if env:
        workers = max(1, int(env))
    else:
        workers = min(4, os.cpu_count() or 1)
    return max(1, min(workers, task_count))


def parallel_map(fn: Callable, items: Iterable) -> list:
    """Order-preserving map, threaded when it pays off."""
    items = list(items)
    workers = worker_count(len(items))
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
