"""Worker-pool plumbing shared by the batch operations.

NERFPLAN_THREADS caps worker parallelism (0 or unset = auto). Results are
always collected in input order, so threaded and single-threaded runs
produce identical output for the same inputs.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def worker_count() -> int:
    raw = os.environ.get("NERFPLAN_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"NERFPLAN_THREADS must be an integer, got {raw!r}")
    if n < 0:
        raise ValueError(f"NERFPLAN_THREADS must be >= 0, got {n}")
    if n == 0:
        return os.cpu_count() or 1
    return n


def parallel_map(fn: Callable[[T], R], items: Iterable[T]) -> list[R]:
    """Map fn over items, preserving input order in the result list."""
    items = list(items)
    workers = min(worker_count(), max(1, len(items)))
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
