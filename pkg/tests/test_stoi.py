import json
from collections.abc import Callable

import numpy as np
import pytest

from ci_coder.audio_io import resample
from ci_coder.AudioSignal import AudioSignal
from ci_coder.exceptions import SignalTooShortError
from ci_coder.models import StoiConfig
from ci_coder.stoi_metric import (
    band_centers,
    remove_silent_frames,
    stoi,
    third_octave_envelopes,
    third_octave_matrix,
)


@pytest.fixture
def clean(make_speech: Callable[..., AudioSignal]) -> AudioSignal:
    return make_speech(1, duration_s=1.0)


def with_noise(signal: AudioSignal, snr_db: float, seed: int = 0) -> AudioSignal:
    noise = np.random.default_rng(seed).standard_normal(len(signal))
    noise *= signal.rms / np.sqrt(np.mean(noise**2)) / 10 ** (snr_db / 20)
    return signal.with_samples(signal.samples + noise)


def test_identical_signals_score_one(clean: AudioSignal) -> None:
    result = stoi(clean, clean)
    assert result.score == pytest.approx(1.0, abs=1e-6)
    assert len(result.per_band) == 15
    assert result.segments == result.frames_used - 30 + 1


def test_polarity_and_level_do_not_matter(clean: AudioSignal) -> None:
    assert stoi(clean, clean.with_samples(-clean.samples)).score == pytest.approx(1.0, abs=1e-6)
    assert stoi(clean, clean.with_samples(0.25 * clean.samples)).score == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("seed", range(5))
def test_score_falls_with_noise(make_speech: Callable[..., AudioSignal], seed: int) -> None:
    clean = make_speech(seed, duration_s=1.0)
    scores = [stoi(clean, with_noise(clean, snr, seed)).score for snr in (20, 10, 0, -10)]
    assert scores[0] > scores[1] > scores[2] > scores[3]
    assert all(0.0 <= s <= 1.0 for s in scores)


@pytest.mark.parametrize("seed", range(5))
def test_noise_alone_scores_low(make_speech: Callable[..., AudioSignal], seed: int) -> None:
    clean = make_speech(seed, duration_s=1.0)
    noise = np.random.default_rng(seed).standard_normal(len(clean))
    noise *= clean.rms / np.sqrt(np.mean(noise**2))
    # about 0.33 on these fixtures, whose syllable envelope dips down to the noise floor
    score = stoi(clean, clean.with_samples(noise)).score
    assert score < 0.45
    assert score < stoi(clean, with_noise(clean, -10, seed)).score


def test_different_sample_rates_are_resampled(clean: AudioSignal) -> None:
    assert stoi(clean, resample(clean, 22050)).score > 0.95


def test_short_signals_are_rejected(make_speech: Callable[..., AudioSignal]) -> None:
    short = make_speech(2, duration_s=0.2)
    with pytest.raises(SignalTooShortError, match="too short"):
        stoi(short, short)


def test_digital_silence_is_too_short_after_silence_removal() -> None:
    silence = AudioSignal(np.zeros(16000), 16000)
    with pytest.raises(SignalTooShortError):
        stoi(silence, silence)


def test_simplified_variant_keeps_every_frame(clean: AudioSignal) -> None:
    cfg = StoiConfig(reference_method=False)
    result = stoi(clean, clean, cfg)
    assert result.frames_used == (10000 - 256) // 128 + 1
    assert result.score == pytest.approx(1.0, abs=1e-6)


def test_silence_removal_shortens_padded_signals(clean: AudioSignal) -> None:
    padded = clean.with_samples(np.concatenate([np.zeros(8000), clean.samples, np.zeros(8000)]))
    kept, _ = remove_silent_frames(padded, padded)
    assert len(kept) < len(padded)
    assert stoi(padded, padded).score == pytest.approx(1.0, abs=1e-6)


def test_tone_lands_in_the_nearest_band() -> None:
    t = np.arange(16000) / 16000
    tone = AudioSignal(np.sin(2 * np.pi * 1000 * t), 16000)
    envelopes = third_octave_envelopes(tone)
    centers = band_centers(StoiConfig())
    assert envelopes.shape[0] == 15
    assert int(np.argmax(envelopes.mean(axis=1))) == int(np.argmin(np.abs(np.log2(centers / 1000))))


def test_band_matrix_is_disjoint() -> None:
    matrix = third_octave_matrix(10000, 512, 15, 150.0)
    assert matrix.shape == (15, 257)
    assert (matrix.sum(axis=0) <= 1).all()
    assert (matrix.sum(axis=1) >= 1).all()


def test_summary_json_leaves_out_envelopes(clean: AudioSignal) -> None:
    summary = json.loads(stoi(clean, clean).summary_json())
    assert set(summary) == {"score", "raw_score", "per_band", "frames_used", "segments"}
