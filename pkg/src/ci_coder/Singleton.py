from __future__ import annotations

import threading
from typing import Any

from loguru import logger


class SingletonMeta(type):
    """
    Metaclass giving a class one process-wide instance.

    File-parallel stages run in worker threads and any of them may be the first to
    touch the instance (a TrackedException raised inside a worker, for example), so
    creation happens under a lock. Arguments of later calls are ignored.
    """

    _instances: dict[type, Any] = {}
    _lock = threading.Lock()

    def __call__(cls, *args: Any, **kwargs: Any) -> Any:
        instance = cls._instances.get(cls)
        if instance is not None:
            return instance

        with SingletonMeta._lock:
            if cls not in cls._instances:
                cls._instances[cls] = super().__call__(*args, **kwargs)
                logger.debug(f"Created the {cls.__name__} instance")
        return cls._instances[cls]
