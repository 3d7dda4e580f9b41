"""Worker-pool helpers with deterministic, order-fixed merging."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def map_ordered(fn: Callable[[T], R], items: Sequence[T], threads: int = 1) -> list[R]:
    """Apply fn to items, in parallel when threads > 1, preserving order.

    Results are merged in input order, so output is independent of the
    worker schedule.
    """
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def ranges(lo: int, hi: int, size: int) -> list[tuple[int, int]]:
    """Split [lo, hi) into consecutive chunks of at most `size`."""
    if size <= 0:
        raise ValueError("size must be positive")
    out = []
    a = lo
    while a < hi:
        b = min(a + size, hi)
        out.append((a, b))
        a = b
    return out
