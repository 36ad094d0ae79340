from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import NonFiniteError
from .Types import FloatArray


@dataclass(frozen=True)
class AudioSignal:
    """A mono sampled waveform, immutable once constructed"""

    samples: FloatArray
    sample_rate_hz: int
    name: str = field(default="", compare=False)

    def __post_init__(self) -> None:
        if int(self.sample_rate_hz) <= 0:
            raise ValueError(f"Sample rate must be positive, got {self.sample_rate_hz}")

        samples = np.array(self.samples, dtype=np.float64).reshape(-1)
        if not np.isfinite(samples).all():
            raise NonFiniteError(f"Signal '{self.name or 'unnamed'}' contains NaN or Inf samples")
        samples.setflags(write=False)

        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))

    def __len__(self) -> int:
        return int(self.samples.size)

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate_hz

    @property
    def rms(self) -> float:
        return float(np.sqrt(np.mean(np.square(self.samples)))) if len(self) else 0.0

    def with_samples(self, samples: FloatArray, sample_rate_hz: int | None = None) -> AudioSignal:
        """derive a new signal keeping the name"""
        return AudioSignal(samples, sample_rate_hz or self.sample_rate_hz, name=self.name)
