import threading
from concurrent.futures import ThreadPoolExecutor

import pytest

from ci_coder.exceptions import TrackedException
from ci_coder.metrics import STAGE_METRIC, Metrics, metrics

WORKERS = 8


class RacingEventError(TrackedException):
    """Raised by several workers at once"""


@pytest.fixture(autouse=True)
def fresh_metrics() -> None:
    metrics.reset()


def test_metrics_is_a_singleton() -> None:
    assert Metrics() is metrics


def test_concurrent_registration_of_a_new_metric() -> None:
    barrier = threading.Barrier(WORKERS)

    def report(worker: int) -> None:
        barrier.wait()
        metrics.register("ConcurrentlyRegisteredEvent", "Seen by every worker", {"worker": str(worker)})

    with ThreadPoolExecutor(WORKERS) as pool:
        list(pool.map(report, range(WORKERS)))

    exposition = metrics.exposition().decode()
    assert "concurrently_registered_event" in exposition
    assert all(f'worker="{worker}"' in exposition for worker in range(WORKERS))


def test_concurrently_raised_tracked_exceptions() -> None:
    barrier = threading.Barrier(WORKERS)

    def fail(worker: int) -> str:
        barrier.wait()
        return str(RacingEventError(f"worker {worker}"))

    with ThreadPoolExecutor(WORKERS) as pool:
        messages = list(pool.map(fail, range(WORKERS)))

    assert messages == [f"worker {worker}" for worker in range(WORKERS)]
    assert "racing_event_error" in metrics.exposition().decode()


def test_stage_timings_stay_out_of_the_default_exposition() -> None:
    metrics.register_stage("encode", 0.25)
    metrics.register_score("ace", 0.8)

    exposition = metrics.exposition().decode()
    assert STAGE_METRIC not in exposition
    assert "stoi_score" in exposition
    assert STAGE_METRIC in metrics.exposition(exclude=()).decode()


def test_reset_drops_observations() -> None:
    metrics.register_score("model", 0.5)
    metrics.reset()

    exposition = metrics.exposition().decode()
    assert "stoi_score" not in exposition
    assert "app_version" in exposition


def test_identical_observations_render_identically() -> None:
    metrics.register_epoch(0.5, 0.4, 1e-3)
    first = metrics.exposition()
    metrics.reset()
    metrics.register_epoch(0.5, 0.4, 1e-3)
    assert metrics.exposition() == first
