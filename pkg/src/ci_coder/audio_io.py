"""
Audio input/output, resampling and framing.

Every downstream stage consumes AudioSignal at the canonical 16 kHz rate;
STOI resamples to its own internal rate through `resample`.
"""
import math
import struct
import warnings
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from loguru import logger
from numpy.lib.stride_tricks import sliding_window_view
from scipy import signal as sps
from scipy.io import wavfile

from .AudioSignal import AudioSignal
from .exceptions import AudioFileError
from .models import Preprocessing, WindowKind
from .Types import FilePath, FloatArray
from .utils import atomic_path

PCM16_SCALE = 32768.0
KAISER_BETA = 8.0
ZERO_CROSSINGS_PER_SIDE = 16
CLIP_TOLERANCE = 1.0001


@dataclass(frozen=True)
class FrameSequence:
    frames: FloatArray
    frame_length: int
    hop: int
    window: FloatArray

    def __len__(self) -> int:
        return int(self.frames.shape[0])


def _failing_chunk(message: str) -> str:
    """name the RIFF chunk a scipy.io.wavfile error message refers to"""
    lowered = message.lower()
    if "riff" in lowered or "not a wav" in lowered:
        return "RIFF"
    if "format" in lowered or "bit depth" in lowered or "fmt" in lowered:
        return "fmt "
    return "data"


def read_wav(path: FilePath) -> AudioSignal:
    """read a PCM16 or float32 WAV file into a mono signal scaled to [-1, 1]"""
    path = Path(path)
    if not path.is_file():
        raise AudioFileError(path, None, "file not found")

    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", wavfile.WavFileWarning)
            sample_rate, data = wavfile.read(path)
    except (ValueError, EOFError, struct.error) as e:
        raise AudioFileError(path, _failing_chunk(str(e)), str(e) or "truncated chunk") from e

    if data.dtype == np.int16:
        samples = data.astype(np.float64) / PCM16_SCALE
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise AudioFileError(path, "fmt ", f"unsupported codec {data.dtype}, expected PCM 16-bit or IEEE float 32-bit")

    if samples.ndim == 2:
        samples = samples.mean(axis=1)

    logger.debug(f"Read {path} ({samples.size} samples at {sample_rate} Hz)")
    return AudioSignal(samples, sample_rate, name=path.stem)


def write_wav(signal: AudioSignal, path: FilePath) -> Path:
    """write a 16-bit PCM mono file; samples outside [-1, 1] are hard-clipped"""
    path = Path(path)
    if len(signal) and np.max(np.abs(signal.samples)) > CLIP_TOLERANCE:
        logger.warning(f"Signal written to {path} exceeds full scale and has been clipped")

    clipped = np.clip(signal.samples, -1.0, 1.0)
    pcm = np.clip(np.round(clipped * PCM16_SCALE), -PCM16_SCALE, PCM16_SCALE - 1).astype(np.int16)

    try:
        with atomic_path(path) as tmp:
            wavfile.write(tmp, signal.sample_rate_hz, pcm)
    except OSError as e:
        raise AudioFileError(path, None, f"cannot write file: {e}") from e

    logger.debug(f"Wrote {path} ({pcm.size} samples at {signal.sample_rate_hz} Hz)")
    return path


@lru_cache(maxsize=16)
def _interpolation_filter(up: int, down: int) -> FloatArray:
    """Kaiser-windowed sinc low-pass with a fixed number of zero crossings per side"""
    max_rate = max(up, down)
    half_len = ZERO_CROSSINGS_PER_SIDE * max_rate
    taps: FloatArray = sps.firwin(2 * half_len + 1, 1.0 / max_rate, window=("kaiser", KAISER_BETA))
    return taps


def resample(signal: AudioSignal, target_rate_hz: int) -> AudioSignal:
    """band-limited rate conversion; output length is round(len * target / source)"""
    if target_rate_hz <= 0:
        raise ValueError(f"Target rate must be positive, got {target_rate_hz}")

    source_rate = signal.sample_rate_hz
    if target_rate_hz == source_rate:
        return signal

    out_length = int(math.floor(len(signal) * target_rate_hz / source_rate + 0.5))
    if not len(signal):
        return signal.with_samples(np.zeros(0), target_rate_hz)

    divisor = math.gcd(source_rate, target_rate_hz)
    up, down = target_rate_hz // divisor, source_rate // divisor
    # resample_poly scales the given taps by `up` itself
    taps = _interpolation_filter(up, down).copy()
    resampled = sps.resample_poly(signal.samples, up, down, window=taps)

    if resampled.size >= out_length:
        resampled = resampled[:out_length]
    else:
        resampled = np.pad(resampled, (0, out_length - resampled.size))

    return signal.with_samples(resampled, target_rate_hz)


def taper(window: WindowKind | str | FloatArray, length: int) -> FloatArray:
    """per-sample multiplicative window; Hann is periodic so it is COLA at half-frame hop"""
    if isinstance(window, np.ndarray):
        if window.shape != (length,):
            raise ValueError(f"Window of shape {window.shape} does not match frame length {length}")
        return window.astype(np.float64)

    kind = WindowKind(window)
    if kind is WindowKind.HANN:
        hann: FloatArray = sps.get_window("hann", length, fftbins=True)
        return hann
    return np.ones(length)


def frame_signal(
    signal: AudioSignal | FloatArray,
    frame_length: int,
    hop: int,
    window: WindowKind | str | FloatArray = WindowKind.RECTANGULAR,
    pad_end: bool = True,
) -> FrameSequence:
    """
    cut a signal into (optionally tapered) frames starting every `hop` samples

    with pad_end the frame count is ceil(len / hop) and trailing frames are zero-padded,
    otherwise only complete frames are returned
    """
    if frame_length <= 0:
        raise ValueError("frame_length must be positive")
    if not 1 <= hop <= frame_length:
        raise ValueError(f"hop must be within [1, frame_length], got {hop}")

    samples = signal.samples if isinstance(signal, AudioSignal) else np.asarray(signal, dtype=np.float64)
    length = samples.size
    window_ = taper(window, frame_length)

    if pad_end:
        count = math.ceil(length / hop)
    else:
        count = 1 + (length - frame_length) // hop if length >= frame_length else 0

    if count == 0:
        return FrameSequence(np.zeros((0, frame_length)), frame_length, hop, window_)

    needed = (count - 1) * hop + frame_length
    padded = np.zeros(max(needed, length))
    padded[:length] = samples
    frames = sliding_window_view(padded, frame_length)[::hop][:count] * window_
    return FrameSequence(frames, frame_length, hop, window_)


def overlap_add(frames: FloatArray, hop: int) -> FloatArray:
    """sum hop-shifted frames back into one signal"""
    count, frame_length = frames.shape
    if count == 0:
        return np.zeros(0)

    out = np.zeros((count - 1) * hop + frame_length)
    for i, frame in enumerate(frames):
        out[i * hop : i * hop + frame_length] += frame
    return out


def normalize_rms(signal: AudioSignal, target_dbfs: float = -26.0) -> AudioSignal:
    """scale a signal to the target RMS level; silence is returned unchanged"""
    rms = signal.rms
    if rms == 0.0:
        return signal
    gain = 10 ** (target_dbfs / 20) / rms
    return signal.with_samples(signal.samples * gain)


def prepare_signal(signal: AudioSignal, preprocessing: Preprocessing) -> AudioSignal:
    """bring a signal to the canonical processing rate and level"""
    signal = resample(signal, preprocessing.sample_rate_hz)
    if preprocessing.normalize_rms:
        signal = normalize_rms(signal, preprocessing.target_rms_dbfs)
    return signal


def list_wavs(directory: FilePath) -> list[Path]:
    """all WAV files below a directory in a stable order"""
    return sorted(p for p in Path(directory).rglob("*") if p.is_file() and p.suffix.lower() == ".wav")
