from __future__ import annotations

import os
import re
import threading
from collections.abc import Collection
from importlib import metadata

from aioprometheus import render
from aioprometheus.collectors import Registry, Summary
from loguru import logger

from .Singleton import SingletonMeta

STAGE_METRIC = "stage_duration_seconds"


def _app_version() -> str:
    try:
        return metadata.version("CI-Coder")
    except metadata.PackageNotFoundError:
        return os.getenv("VERSION", "Unknown")


class Metrics(metaclass=SingletonMeta):
    """
    Process-wide summaries of what the toolkit did.

    Collectors are kept out of the global aioprometheus registry so that `reset`
    can start a fresh set for every experiment run. Registration runs under a lock
    because file-parallel workers report into the same instance.
    """

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._metrics: dict[str, Summary] = {}
        self.reset()

    @staticmethod
    def _transform(text: str) -> str:
        """Convert camel/pascal case to snake_case"""
        return re.sub(r"(?<!^)(?=[A-Z])", "_", text).lower()

    def _create(self, name: str, description: str) -> None:
        """Create metric"""
        self._metrics[name] = Summary(name=self._transform(name), doc=description, registry=Registry())

    def reset(self) -> None:
        """Drop every observation, keeping only the application version"""
        with self._lock:
            self._metrics = {}
            self._create("app_version", "Runtime application version")
            self._metrics["app_version"].observe(labels={"app_version": _app_version()}, value=1)

    def register(
        self, name: str, description: str | None, labels: dict[str, str] | None = None, value: float = 1
    ) -> None:
        """Register metric event"""
        if labels is None:
            labels = {}
        with self._lock:
            if name not in self._metrics:
                self._create(name=name, description=description or "")
            self._metrics[name].observe(labels=labels, value=value)

    def register_stage(self, stage: str, seconds: float) -> None:
        """Register the duration of a pipeline stage"""
        self.register(
            name=STAGE_METRIC,
            description="Wall time spent in pipeline stages",
            labels={"stage": stage},
            value=seconds,
        )

    def register_score(self, pipeline: str, score: float) -> None:
        """Register a per-file STOI score of the ACE or model pipeline"""
        self.register(
            name="stoi_score",
            description="Per-file STOI scores against the clean reference",
            labels={"pipeline": pipeline},
            value=score,
        )

    def register_epoch(self, train_loss: float, val_loss: float, lr: float) -> None:
        """Register a finished training epoch"""
        for kind, value in (("train_loss", train_loss), ("val_loss", val_loss), ("learning_rate", lr)):
            self.register(
                name="training_epoch",
                description="Per-epoch training figures",
                labels={"kind": kind},
                value=value,
            )

    def exposition(self, exclude: Collection[str] = (STAGE_METRIC,)) -> bytes:
        """
        Prometheus text exposition of the tracked metrics (textfile collector friendly).
        Wall-clock stage timings are left out by default so identical runs render identical files.
        """
        registry = Registry()
        with self._lock:
            for name, collector in self._metrics.items():
                if name not in exclude:
                    registry.register(collector)
        content, _ = render(registry, [])
        logger.debug(f"Rendered {len(registry.collectors)} of {len(self._metrics)} tracked metrics")
        return bytes(content)


metrics = Metrics()
