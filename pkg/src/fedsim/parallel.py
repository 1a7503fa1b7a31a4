"""Order-preserving parallel map for independent device-training tasks."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def max_threads() -> int:
    """Thread cap from ``SIM_THREADS`` (0 or unset = one per CPU)."""
    raw = os.environ.get("SIM_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"SIM_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise ValueError("SIM_THREADS must be >= 0")
    return n or (os.cpu_count() or 1)


def ordered_map(fn: Callable[[T], R], items: Iterable[T]) -> list[R]:
    """``[fn(x) for x in items]``, possibly run on a thread pool.

    Results come back in input order, so callers see the same values whatever
    the thread count; tasks must not share mutable state.
    """
    items = list(items)
    workers = min(max_threads(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
