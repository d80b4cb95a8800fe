import concurrent.futures as cf
from contextlib import contextmanager
from contextvars import ContextVar
from typing import Callable, Iterable, Iterator, Optional, TypeVar

from app.config import get_settings

T = TypeVar("T")
R = TypeVar("R")

_thread_cap: ContextVar[Optional[int]] = ContextVar("thread_cap", default=None)


@contextmanager
def thread_limit(threads: Optional[int]) -> Iterator[None]:
    """Cap worker threads for everything run inside the block."""
    token = _thread_cap.set(threads)
    try:
        yield
    finally:
        _thread_cap.reset(token)


def worker_count() -> int:
    cap = _thread_cap.get()
    return max(1, cap if cap is not None else get_settings().threads)


def parallel_map(fn: Callable[[T], R], items: Iterable[T]) -> list[R]:
    """Map ``fn`` over ``items`` on a thread pool, preserving order.

    numpy releases the GIL inside its kernels, so threads are enough for the
    array-heavy work done here.
    """
    items = list(items)
    threads = worker_count()
    if threads == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with cf.ThreadPoolExecutor(max_workers=min(threads, len(items))) as pool:
        return list(pool.map(fn, items))
