from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from loguru import logger

from .exceptions import ElectrodogramFormatError
from .Types import FilePath, Float32Array, IntArray
from .utils import write_bytes_atomic

MAGIC = b"EGRM"
VERSION = 1
HEADER = np.dtype(
    [
        ("magic", "S4"),
        ("version", "<u4"),
        ("channels", "<u4"),
        ("frames", "<u8"),
        ("frame_rate_hz", "<f8"),
    ]
)
MAX_PAYLOAD_BYTES = 2**34


def _validated(magnitudes: Float32Array) -> Float32Array:
    if magnitudes.ndim != 2:
        raise ElectrodogramFormatError(f"Electrodogram must be a channels x frames matrix, got {magnitudes.ndim}-D")
    if not np.isfinite(magnitudes).all():
        raise ElectrodogramFormatError("Electrodogram contains non-finite magnitudes")
    if magnitudes.size and (magnitudes.min() < 0 or magnitudes.max() > 1):
        raise ElectrodogramFormatError(
            f"Electrodogram magnitudes must lie in [0, 1], found [{magnitudes.min()}, {magnitudes.max()}]"
        )
    return magnitudes


@dataclass(frozen=True)
class Electrodogram:
    """
    Channels x frames matrix of stimulation magnitudes in [0, 1].

    Channel 0 is the most apical (lowest frequency) one; 0 means not stimulated.
    Magnitudes are held as float32 so the file format round-trips bit-exactly.
    """

    magnitudes: Float32Array
    frame_rate_hz: float

    def __post_init__(self) -> None:
        magnitudes = _validated(np.array(self.magnitudes, dtype=np.float32, order="C"))
        magnitudes.setflags(write=False)
        object.__setattr__(self, "magnitudes", magnitudes)

        if not np.isfinite(self.frame_rate_hz) or self.frame_rate_hz <= 0:
            raise ElectrodogramFormatError(f"Frame rate must be positive, got {self.frame_rate_hz}")
        object.__setattr__(self, "frame_rate_hz", float(self.frame_rate_hz))

    @property
    def num_channels(self) -> int:
        return int(self.magnitudes.shape[0])

    @property
    def num_frames(self) -> int:
        return int(self.magnitudes.shape[1])

    @property
    def selection_mask(self) -> np.ndarray:
        return self.magnitudes > 0

    def nonzero_counts(self) -> IntArray:
        """number of stimulated channels per frame"""
        counts: IntArray = np.count_nonzero(self.magnitudes, axis=0).astype(np.int64)
        return counts

    def to_bytes(self) -> bytes:
        header = np.zeros(1, dtype=HEADER)
        header[0] = (MAGIC, VERSION, self.num_channels, self.num_frames, self.frame_rate_hz)
        payload = self.magnitudes.astype("<f4").tobytes(order="C")
        return header.tobytes() + payload

    @classmethod
    def from_bytes(cls, payload: bytes) -> Electrodogram:
        if len(payload) < HEADER.itemsize:
            raise ElectrodogramFormatError(f"Malformed header: {len(payload)} bytes, need {HEADER.itemsize}")

        header = np.frombuffer(payload, dtype=HEADER, count=1)[0]
        if header["magic"] != MAGIC:
            raise ElectrodogramFormatError(f"Malformed header: bad magic {header['magic']!r}")
        if header["version"] != VERSION:
            raise ElectrodogramFormatError(f"Unsupported electrodogram version {header['version']}")

        channels, frames = int(header["channels"]), int(header["frames"])
        expected = channels * frames * 4
        if expected > MAX_PAYLOAD_BYTES or len(payload) - HEADER.itemsize != expected:
            raise ElectrodogramFormatError(
                f"Dimension overflow: {channels} x {frames} needs {expected} payload bytes, "
                f"file holds {len(payload) - HEADER.itemsize}"
            )

        if expected:
            data = np.frombuffer(payload, dtype="<f4", offset=HEADER.itemsize).reshape(channels, frames)
        else:
            data = np.zeros((channels, frames), dtype="<f4")
        return cls(data.astype(np.float32), float(header["frame_rate_hz"]))

    def save(self, path: FilePath) -> Path:
        path = write_bytes_atomic(path, self.to_bytes())
        logger.debug(f"Electrodogram {self.num_channels}x{self.num_frames} saved to {path}")
        return path

    @classmethod
    def load(cls, path: FilePath) -> Electrodogram:
        path = Path(path)
        try:
            return cls.from_bytes(path.read_bytes())
        except ElectrodogramFormatError as e:
            raise ElectrodogramFormatError(f"{path}: {e}") from e


def serialize(electrodogram: Electrodogram) -> bytes:
    return electrodogram.to_bytes()


def deserialize(payload: bytes) -> Electrodogram:
    return Electrodogram.from_bytes(payload)
