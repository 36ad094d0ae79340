import hashlib
import os
import tempfile
from collections.abc import Callable, Iterable, Iterator, Sequence
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from functools import wraps
from pathlib import Path
from time import time
from typing import Any, TypeVar

from loguru import logger

from .config import CONFIG
from .metrics import metrics
from .Types import FilePath

T = TypeVar("T")
R = TypeVar("R")


def time_execution(func: Any) -> Any:
    """This decorator shows the execution time of the function object passed"""

    @wraps(func)
    def wrap_func(*args: Any, **kwargs: Any) -> Any:
        t1 = time()
        result = func(*args, **kwargs)
        t2 = time()
        logger.debug(f"Function {func.__name__!r} executed in {(t2 - t1):.4f}s")
        metrics.register_stage(func.__name__, t2 - t1)
        return result

    return wrap_func


def sha256_hexdigest(payload: str | bytes) -> str:
    """SHA256 checksum of a string or a byte string"""
    if isinstance(payload, str):
        payload = payload.encode()
    return hashlib.sha256(payload).hexdigest()


@contextmanager
def atomic_path(target: FilePath) -> Iterator[Path]:
    """
    yield a temporary sibling path of the target and move it into place once the block succeeds,
    so an interrupted write never leaves a partial file behind
    """
    target = Path(target)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{target.name}.", suffix=".tmp", dir=target.parent)
    os.close(fd)
    tmp_path = Path(tmp_name)

    try:
        yield tmp_path
        os.replace(tmp_path, target)
    finally:
        if tmp_path.exists():
            tmp_path.unlink()


def write_bytes_atomic(target: FilePath, payload: bytes) -> Path:
    with atomic_path(target) as tmp:
        tmp.write_bytes(payload)
    return Path(target)


def write_text_atomic(target: FilePath, text: str) -> Path:
    with atomic_path(target) as tmp:
        tmp.write_text(text, encoding="utf-8")
    return Path(target)


def parallel_map(func: Callable[[T], R], items: Iterable[T], workers: int | None = None) -> list[R]:
    """
    map func over items with a thread pool sized by CI_CODER_RUNTIME_THREADS,
    results are returned in input order regardless of scheduling
    """
    items_: Sequence[T] = list(items)
    workers = workers or CONFIG.runtime.threads

    if workers <= 1 or len(items_) <= 1:
        return [func(item) for item in items_]

    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items_))
