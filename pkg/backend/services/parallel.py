"""Thread-pool map that carries the caller's context into the workers."""

import contextvars
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

from backend.config.settings import settings

T = TypeVar("T")
R = TypeVar("R")


def parallel_map(fn: Callable[[T], R], items: Iterable[T], max_workers: Optional[int] = None) -> List[R]:
    """Results in item order; each item runs in its own copy of the submitting context."""
    with ThreadPoolExecutor(max_workers=max_workers or settings.max_workers) as pool:
        futures = [pool.submit(contextvars.copy_context().run, fn, item) for item in items]
        return [f.result() for f in futures]
