from collections.abc import Callable
from pathlib import Path
from typing import no_type_check

import numpy as np
import pytest

from ci_coder.audio_io import write_wav
from ci_coder.AudioSignal import AudioSignal

SAMPLE_RATE = 16000


@no_type_check
def pytest_addoption(parser) -> None:
    parser.addoption("--slow", action="store_true", default=False, help="run slow end-to-end tests")


@no_type_check
def pytest_collection_modifyitems(config, items) -> None:
    if config.getoption("--slow"):
        return

    skip_slow = pytest.mark.skip(reason="need --slow option to run")

    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def speech_like(seed: int, duration_s: float = 0.5, sample_rate: int = SAMPLE_RATE) -> AudioSignal:
    """voiced harmonics shaped by two formants under a 4 Hz syllable envelope plus a faint noise floor"""
    rng = np.random.default_rng(seed)
    t = np.arange(int(duration_s * sample_rate)) / sample_rate
    f0 = rng.uniform(100, 220)
    formants = (rng.uniform(400, 900), rng.uniform(1100, 2400))

    voiced = np.zeros_like(t)
    for harmonic in range(1, int(4000 / f0)):
        freq = harmonic * f0
        gain = sum(np.exp(-(((freq - f) / 150.0) ** 2)) for f in formants) + 0.05
        voiced += gain * np.sin(2 * np.pi * freq * t + rng.uniform(0, 2 * np.pi))

    syllables = 0.5 * (1 - np.cos(2 * np.pi * 4.0 * t + rng.uniform(0, np.pi)))
    samples = voiced * syllables + 0.01 * rng.standard_normal(t.size)
    samples *= 0.5 / np.max(np.abs(samples))
    return AudioSignal(samples, sample_rate, name=f"utt{seed:03d}")


def write_corpus(directory: Path, count: int, duration_s: float = 0.5) -> list[Path]:
    directory.mkdir(parents=True, exist_ok=True)
    return [write_wav(speech_like(i, duration_s), directory / f"utt{i:03d}.wav") for i in range(count)]


@pytest.fixture
def make_speech() -> Callable[..., AudioSignal]:
    return speech_like


@pytest.fixture
def make_corpus() -> Callable[..., list[Path]]:
    return write_corpus


@pytest.fixture
def speech() -> AudioSignal:
    return speech_like(0)


@pytest.fixture
def wav_file(tmp_path: Path, speech: AudioSignal) -> Path:
    return write_wav(speech, tmp_path / "speech.wav")
