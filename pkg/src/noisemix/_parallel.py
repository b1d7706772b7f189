"""Deterministic parallel mapping helper."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

__all__ = ["parallel_map"]


def parallel_map(fn, items, threads: int = 1) -> list:
    """Map ``fn`` over ``items``, results in input order.

    Work items must be independent; with ``threads > 1`` they are scheduled
    on a thread pool, which changes timing only, never results or order.
    """
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
