from __future__ import annotations

import numpy as np
from loguru import logger
from scipy import signal as sps

from .ace_codec import build_filterbank
from .AudioSignal import AudioSignal
from .Electrodogram import Electrodogram
from .exceptions import MagnitudeRangeError, ShapeMismatchError
from .models import AceConfig, VocoderConfig
from .Types import FloatArray

PEAK_LIMIT = 0.9


def inverse_lgf(y: FloatArray | float, config: AceConfig) -> FloatArray | float:
    """
    envelope level of a stimulation magnitude: B + (S - B) * ((1 + rho)^y - 1) / rho

    magnitude 0 stands for an unstimulated channel and maps to silence rather than B
    """
    magnitudes = np.asarray(y, dtype=np.float64)
    out_of_range = (magnitudes < 0) | (magnitudes > 1) | ~np.isfinite(magnitudes)
    if np.any(out_of_range):
        raise MagnitudeRangeError(f"Stimulation magnitude {magnitudes[out_of_range].flat[0]} is outside [0, 1]")

    base, saturation, rho = config.lgf_base, config.lgf_saturation, config.lgf_rho
    levels = base + (saturation - base) * np.expm1(magnitudes * np.log1p(rho)) / rho
    levels = np.where(magnitudes > 0, levels, 0.0)

    if levels.ndim == 0:
        return float(levels)
    result: FloatArray = levels
    return result


def carrier_frequencies(vocoder_config: VocoderConfig, ace_config: AceConfig) -> FloatArray:
    if vocoder_config.carrier_freqs is not None:
        return np.asarray(vocoder_config.carrier_freqs, dtype=np.float64)
    centers: FloatArray = build_filterbank(ace_config).centers.copy()
    return centers


def synthesize_channels(e: Electrodogram, vocoder_config: VocoderConfig, ace_config: AceConfig) -> FloatArray:
    """sum of envelope-modulated carriers, without peak normalization"""
    carriers = carrier_frequencies(vocoder_config, ace_config)
    if carriers.size != e.num_channels:
        raise ShapeMismatchError(f"{carriers.size} carriers for an electrodogram with {e.num_channels} channels")

    rate = vocoder_config.output_rate_hz
    if carriers.size and carriers.max() >= rate / 2:
        raise ValueError(f"Carrier at {carriers.max():g} Hz is not below the {rate / 2:g} Hz Nyquist frequency")

    length = int(round(e.num_frames * rate / e.frame_rate_hz))
    if not length or not e.num_channels:
        return np.zeros(length)

    # zero-order hold: sample n shows the frame that was current at time n / rate
    frame_index = np.minimum((np.arange(length) * e.frame_rate_hz / rate).astype(np.int64), e.num_frames - 1)
    envelopes = e.magnitudes.astype(np.float64)[:, frame_index]
    if vocoder_config.inverse_lgf:
        envelopes = np.asarray(inverse_lgf(envelopes, ace_config))

    pole = np.exp(-2 * np.pi * vocoder_config.envelope_smoothing_hz / rate)
    envelopes = sps.lfilter([1 - pole], [1, -pole], envelopes, axis=1)

    phase = 2 * np.pi * carriers[:, None] * np.arange(length)[None, :] / rate
    output: FloatArray = np.sum(envelopes * np.sin(phase), axis=0)
    return output


def synthesize(e: Electrodogram, vocoder_config: VocoderConfig, ace_config: AceConfig, name: str = "") -> AudioSignal:
    """sine-wave vocoder: one carrier per channel at the channel center frequency by default"""
    samples = synthesize_channels(e, vocoder_config, ace_config)
    peak = float(np.max(np.abs(samples))) if samples.size else 0.0
    if peak > PEAK_LIMIT:
        samples = samples * (PEAK_LIMIT / peak)
        logger.debug(f"Vocoded output '{name}' peak-normalized from {peak:.3f} to {PEAK_LIMIT}")
    return AudioSignal(samples, vocoder_config.output_rate_hz, name=name)
