"""Deterministic sharding of batch work across worker threads."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import TYPE_CHECKING, TypeVar

if TYPE_CHECKING:
    from collections.abc import Callable, Iterable, Iterator, Sequence

T = TypeVar("T")
R = TypeVar("R")


def chunk(iterable: Iterable[T], replica: int = 1, total: int = 1) -> Iterator[T]:
    """Yield the ``replica``-th of ``total`` contiguous chunks of the iterable.

    **Distribution Behavior:**

    - **Standard Distribution** (items >= replicas): items are divided into
      equal chunks; the last replica also receives the remainder.
    - **Sparse Distribution** (items < replicas): each of the first N replicas
      gets exactly one item; the rest get nothing.

    Args:
        iterable (Iterable[T]): Items to distribute.
        replica (int): 1-based worker index, ``1 <= replica <= total``.
        total (int): Number of workers, ``> 0``.

    Raises:
        ValueError: If ``total <= 0``, ``replica < 1`` or ``replica > total``.

    Yields:
        Iterator[T]: Items of this worker, in input order.
    """
    if total <= 0:
        msg = "total must be positive"
        raise ValueError(msg)
    if replica < 1:
        msg = "replica must be >= 1 (1-based indexing expected)"
        raise ValueError(msg)
    if replica > total:
        msg = "replica cannot exceed total"
        raise ValueError(msg)

    items = list(iterable)
    count = len(items)
    index = replica - 1
    if count < total:
        if index < count:
            yield items[index]
        return
    size = count // total
    start = index * size
    end = (index + 1) * size if index < total - 1 else count
    yield from items[start:end]


def shards(items: Sequence[T], total: int) -> list[list[T]]:
    """All non-empty chunks of ``items`` for ``total`` workers, in worker order."""
    parts = [list(chunk(items, replica, total)) for replica in range(1, total + 1)]
    return [part for part in parts if part]


def ordered_map(function: Callable[[T], R], items: Sequence[T], threads: int = 1) -> list[R]:
    """Apply ``function`` to every item and return results in input order.

    With ``threads == 1`` everything runs on the calling thread.
    """
    if threads <= 1 or len(items) <= 1:
        return [function(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads, thread_name_prefix="latentsft") as pool:
        return list(pool.map(function, items))
