"""
Reference ACE strategy: FFT filterbank, channel envelopes, N-of-M maxima
selection and loudness growth compression into an electrodogram.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from loguru import logger

from .audio_io import frame_signal, prepare_signal, read_wav
from .AudioSignal import AudioSignal
from .Electrodogram import Electrodogram, deserialize, serialize
from .exceptions import FilterbankError, SampleRateMismatchError
from .models import AceConfig, Preprocessing
from .Types import BoolArray, FilePath, FloatArray, IntArray

__all__ = [
    "FilterbankMap",
    "build_filterbank",
    "compute_envelopes",
    "select_maxima",
    "select_maxima_matrix",
    "lgf_compress",
    "encode",
    "encode_file",
    "serialize",
    "deserialize",
]


@dataclass(frozen=True)
class FilterbankMap:
    """
    Bin-to-channel allocation of the analysis FFT.

    assignment holds, for every rfft bin, the channel it contributes to or -1
    when the bin center lies outside the band edges.
    """

    assignment: IntArray
    centers: FloatArray
    bin_freqs: FloatArray
    weights: FloatArray

    @property
    def num_channels(self) -> int:
        return int(self.centers.size)

    def bins_per_channel(self) -> IntArray:
        counts: IntArray = self.weights.sum(axis=1).astype(np.int64)
        return counts


def build_filterbank(config: AceConfig) -> FilterbankMap:
    """assign every in-range FFT bin to the band whose edges contain its center frequency"""
    return _build_filterbank(config.json())


@lru_cache(maxsize=8)
def _build_filterbank(config_json: str) -> FilterbankMap:
    config = AceConfig.parse_raw(config_json)
    edges = np.asarray(config.edges, dtype=np.float64)
    num_bins = config.fft_size // 2 + 1
    bin_freqs = np.arange(num_bins) * config.sample_rate_hz / config.fft_size

    in_range = (bin_freqs >= edges[0]) & (bin_freqs <= edges[-1])
    channel = np.searchsorted(edges, bin_freqs, side="right") - 1
    # a bin sitting exactly on the top edge belongs to the last band
    channel = np.minimum(channel, config.num_channels - 1)
    assignment = np.where(in_range, channel, -1).astype(np.int64)

    weights = np.zeros((config.num_channels, num_bins))
    weights[assignment[in_range], np.flatnonzero(in_range)] = 1.0
    counts = weights.sum(axis=1)

    empty = np.flatnonzero(counts == 0)
    if empty.size:
        raise FilterbankError(
            f"Channel(s) {', '.join(str(c + 1) for c in empty)} receive no FFT bin: band edges are narrower "
            f"than the {config.sample_rate_hz / config.fft_size:g} Hz bin spacing"
        )

    centers = weights @ bin_freqs / counts
    for array in (assignment, centers, bin_freqs, weights):
        array.setflags(write=False)

    logger.debug(f"Filterbank built: {int(in_range.sum())} bins over {config.num_channels} channels")
    return FilterbankMap(assignment, centers, bin_freqs, weights)


def compute_envelopes(signal: AudioSignal, config: AceConfig, fb: FilterbankMap | None = None) -> FloatArray:
    """
    M x T matrix of channel envelopes: root of the summed bin power per band

    FFT magnitudes are scaled by 2 / sum(window), so a full-scale sinusoid centred
    on a bin gives an envelope of 1.0
    """
    if signal.sample_rate_hz != config.sample_rate_hz:
        raise SampleRateMismatchError(
            f"ACE expects {config.sample_rate_hz} Hz input, got {signal.sample_rate_hz} Hz for '{signal.name}'"
        )
    fb = fb or build_filterbank(config)

    frames = frame_signal(signal, config.fft_size, config.hop, config.analysis_window)
    if not len(frames):
        return np.zeros((config.num_channels, 0))

    spectrum = np.fft.rfft(frames.frames, n=config.fft_size, axis=1)
    power = np.square(np.abs(spectrum)).T
    gain = 2.0 / float(np.sum(frames.window))
    envelopes: FloatArray = np.sqrt(fb.weights @ power) * gain
    return envelopes


def select_maxima(envelope_frame: FloatArray, num_maxima: int) -> BoolArray:
    """mask of the N largest entries; ties go to the lower channel index"""
    frame = np.asarray(envelope_frame, dtype=np.float64)
    if not 0 <= num_maxima <= frame.size:
        raise ValueError(f"Cannot select {num_maxima} maxima out of {frame.size} channels")

    order = np.argsort(-frame, kind="stable")
    mask = np.zeros(frame.size, dtype=bool)
    mask[order[:num_maxima]] = True
    return mask


def select_maxima_matrix(envelopes: FloatArray, num_maxima: int) -> BoolArray:
    """select_maxima applied to every column of an M x T matrix"""
    num_channels = envelopes.shape[0]
    if not 0 <= num_maxima <= num_channels:
        raise ValueError(f"Cannot select {num_maxima} maxima out of {num_channels} channels")

    order = np.argsort(-envelopes, axis=0, kind="stable")[:num_maxima]
    mask = np.zeros(envelopes.shape, dtype=bool)
    np.put_along_axis(mask, order, True, axis=0)
    return mask


def lgf_compress(x: FloatArray | float, config: AceConfig) -> FloatArray | float:
    """loudness growth function: 0 up to B, 1 from S on, logarithmic in between"""
    levels = np.asarray(x, dtype=np.float64)
    if np.any(levels < 0):
        raise ValueError("Envelope levels must be non-negative")

    base, saturation, rho = config.lgf_base, config.lgf_saturation, config.lgf_rho
    relative = np.clip((levels - base) / (saturation - base), 0.0, 1.0)
    magnitudes = np.log1p(rho * relative) / np.log1p(rho)

    if magnitudes.ndim == 0:
        return float(magnitudes)
    compressed: FloatArray = magnitudes
    return compressed


def encode(signal: AudioSignal, config: AceConfig, fb: FilterbankMap | None = None) -> Electrodogram:
    """envelopes, N-of-M selection and LGF; unselected channels carry 0"""
    envelopes = compute_envelopes(signal, config, fb)
    mask = select_maxima_matrix(envelopes, config.num_maxima)
    magnitudes = np.where(mask, lgf_compress(envelopes, config), 0.0)
    return Electrodogram(magnitudes, config.frame_rate_hz)


def encode_file(path: FilePath, config: AceConfig, preprocessing: Preprocessing | None = None) -> Electrodogram:
    """read, resample to the ACE rate, optionally level-normalize and encode a WAV file"""
    preprocessing = preprocessing or Preprocessing(sample_rate_hz=config.sample_rate_hz)
    signal = prepare_signal(read_wav(path), preprocessing)
    electrodogram = encode(signal, config)
    logger.debug(f"Encoded {Path(path).name}: {electrodogram.num_channels}x{electrodogram.num_frames} frames")
    return electrodogram
