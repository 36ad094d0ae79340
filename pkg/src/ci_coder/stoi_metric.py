"""
Short-time objective intelligibility.

Both signals are brought to the internal 10 kHz rate, frames where the clean
signal is more than the dynamic range below its loudest frame are dropped,
third-octave band envelopes are correlated over 30-frame segments and the
correlations are averaged into one score.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from loguru import logger

from .audio_io import frame_signal, overlap_add, resample
from .AudioSignal import AudioSignal
from .exceptions import SignalTooShortError
from .models import StoiConfig, StoiResult, WindowKind
from .Types import BoolArray, FloatArray

EPS = float(np.finfo(np.float64).eps)


@lru_cache(maxsize=4)
def third_octave_matrix(sample_rate: int, fft_size: int, num_bands: int, lowest_center_hz: float) -> FloatArray:
    """
    K x (fft_size/2 + 1) 0/1 matrix grouping STFT bins into third-octave bands

    band edges lowest_center * 2^((2k -+ 1) / 6) are snapped to the nearest bin, which caps them at Nyquist
    """
    freqs = np.linspace(0, sample_rate, fft_size + 1)[: fft_size // 2 + 1]
    k = np.arange(num_bands, dtype=np.float64)
    low = lowest_center_hz * 2.0 ** ((2 * k - 1) / 6)
    high = lowest_center_hz * 2.0 ** ((2 * k + 1) / 6)

    matrix = np.zeros((num_bands, freqs.size))
    for band in range(num_bands):
        low_bin = int(np.argmin(np.square(freqs - low[band])))
        high_bin = int(np.argmin(np.square(freqs - high[band])))
        matrix[band, low_bin:high_bin] = 1.0
    matrix.setflags(write=False)
    return matrix


def band_centers(cfg: StoiConfig) -> FloatArray:
    centers: FloatArray = cfg.lowest_center_hz * 2.0 ** (np.arange(cfg.num_bands) / 3)
    return centers


def _to_internal_rate(signal: AudioSignal, cfg: StoiConfig) -> FloatArray:
    return resample(signal, cfg.internal_rate).samples


def _frame_energies_db(frames: FloatArray) -> FloatArray:
    energies: FloatArray = 20 * np.log10(np.linalg.norm(frames, axis=1) + EPS)
    return energies


def _voiced_frames(clean: FloatArray, cfg: StoiConfig) -> tuple[FloatArray, BoolArray]:
    frames = frame_signal(clean, cfg.frame_length, cfg.hop, WindowKind.HANN, pad_end=False).frames
    if not np.any(frames):
        return frames, np.zeros(len(frames), dtype=bool)
    energies = _frame_energies_db(frames)
    keep: BoolArray = energies > energies.max() - cfg.dynamic_range_db
    return frames, keep


def _remove_silent_samples(clean: FloatArray, degraded: FloatArray, cfg: StoiConfig) -> tuple[FloatArray, FloatArray]:
    clean_frames, keep = _voiced_frames(clean, cfg)
    degraded_frames = frame_signal(degraded, cfg.frame_length, cfg.hop, WindowKind.HANN, pad_end=False).frames
    return overlap_add(clean_frames[keep], cfg.hop), overlap_add(degraded_frames[keep], cfg.hop)


def _equal_length(clean: FloatArray, degraded: FloatArray) -> tuple[FloatArray, FloatArray]:
    length = max(clean.size, degraded.size)
    return np.pad(clean, (0, length - clean.size)), np.pad(degraded, (0, length - degraded.size))


def remove_silent_frames(
    clean: AudioSignal, degraded: AudioSignal, cfg: StoiConfig | None = None
) -> tuple[AudioSignal, AudioSignal]:
    """
    drop the frames in which the clean signal is more than the dynamic range below its loudest
    frame (all of them for digital silence) and rebuild both signals by 50% overlap-add
    """
    cfg = cfg or StoiConfig()
    if clean.sample_rate_hz != degraded.sample_rate_hz:
        degraded = resample(degraded, clean.sample_rate_hz)
    x, y = _equal_length(clean.samples, degraded.samples)
    x_kept, y_kept = _remove_silent_samples(x, y, cfg)
    return clean.with_samples(x_kept), degraded.with_samples(y_kept)


def _band_envelopes(samples: FloatArray, cfg: StoiConfig) -> FloatArray:
    frames = frame_signal(samples, cfg.frame_length, cfg.hop, WindowKind.HANN, pad_end=False).frames
    obm = third_octave_matrix(cfg.internal_rate, cfg.fft_size, cfg.num_bands, cfg.lowest_center_hz)
    if not len(frames):
        return np.zeros((cfg.num_bands, 0))
    power = np.square(np.abs(np.fft.rfft(frames, n=cfg.fft_size, axis=1))).T
    envelopes: FloatArray = np.sqrt(obm @ power)
    return envelopes


def _require_segment(envelopes: FloatArray, cfg: StoiConfig, what: str) -> None:
    if envelopes.shape[1] < cfg.segment_length:
        raise SignalTooShortError(
            f"Signal too short: {what} has {envelopes.shape[1]} frames after silence removal, "
            f"one analysis segment needs {cfg.segment_length}"
        )


def third_octave_envelopes(signal: AudioSignal, cfg: StoiConfig | None = None) -> FloatArray:
    """K x L third-octave band envelopes of the STFT at the internal rate (silent frames removed)"""
    cfg = cfg or StoiConfig()
    samples = _to_internal_rate(signal, cfg)
    if cfg.reference_method:
        samples, _ = _remove_silent_samples(samples, samples, cfg)
    envelopes = _band_envelopes(samples, cfg)
    _require_segment(envelopes, cfg, f"'{signal.name or 'signal'}'")
    return envelopes


def _segments(envelopes: FloatArray, length: int) -> FloatArray:
    """(L - N + 1) x K x N stack of the trailing N-frame windows"""
    windows: FloatArray = np.lib.stride_tricks.sliding_window_view(envelopes, length, axis=1).transpose(1, 0, 2)
    return windows


def _normalized(segments: FloatArray) -> FloatArray:
    centred = segments - segments.mean(axis=2, keepdims=True)
    result: FloatArray = centred / (np.linalg.norm(centred, axis=2, keepdims=True) + EPS)
    return result


def stoi(clean: AudioSignal, degraded: AudioSignal, cfg: StoiConfig | None = None) -> StoiResult:
    """intelligibility of `degraded` against the `clean` reference"""
    cfg = cfg or StoiConfig()
    x, y = _equal_length(_to_internal_rate(clean, cfg), _to_internal_rate(degraded, cfg))
    if cfg.reference_method:
        x, y = _remove_silent_samples(x, y, cfg)

    x_env, y_env = _band_envelopes(x, cfg), _band_envelopes(y, cfg)
    _require_segment(x_env, cfg, f"'{clean.name or 'clean signal'}'")

    x_seg, y_seg = _segments(x_env, cfg.segment_length), _segments(y_env, cfg.segment_length)
    if cfg.reference_method:
        scale = np.linalg.norm(x_seg, axis=2, keepdims=True) / (np.linalg.norm(y_seg, axis=2, keepdims=True) + EPS)
        clip = 10 ** (-cfg.clip_sdr_beta_db / 20)
        y_seg = np.minimum(y_seg * scale, x_seg * (1 + clip))

    correlations = np.sum(_normalized(x_seg) * _normalized(y_seg), axis=2)
    raw_score = float(correlations.mean())
    score = float(np.clip(raw_score, 0.0, 1.0))
    logger.debug(f"STOI of '{degraded.name}' against '{clean.name}': {score:.4f} over {x_env.shape[1]} frames")

    return StoiResult(
        score=score,
        raw_score=raw_score,
        per_band=[float(v) for v in correlations.mean(axis=0)],
        frames_used=int(x_env.shape[1]),
        segments=int(correlations.shape[0]),
        clean_envelopes=x_env,
        degraded_envelopes=y_env,
    )
