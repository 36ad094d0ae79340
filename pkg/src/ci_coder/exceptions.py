from copy import copy
from typing import Any

from .metrics import Metrics


class TrackedException(Exception):  # noqa: N818
    """An exception that increments Prometheus metric counter for itself"""

    _labels: dict[str, str] = {}

    def __init__(self, *args: Any) -> None:
        labels = copy(self._labels)
        if args:
            labels["message"] = str(args[0])
        Metrics().register(
            name=self.__class__.__name__,
            description=self.__class__.__doc__,
            labels=labels,
        )
        super().__init__(*args)


class AudioFileError(TrackedException):
    """Raised when a WAV file is missing, truncated, uses an unsupported codec or cannot be written"""

    def __init__(self, path: Any, chunk: str | None, reason: str) -> None:
        self.path = str(path)
        self.chunk = chunk
        self.reason = reason
        location = f"{self.path} [chunk '{chunk}']" if chunk else self.path
        super().__init__(f"{location}: {reason}")


class SampleRateMismatchError(TrackedException):
    """Raised when a signal is not at the sample rate a stage requires"""


class FilterbankError(TrackedException):
    """Raised when band edges leave a channel without any FFT bin"""


class ElectrodogramFormatError(TrackedException):
    """Raised when an electrodogram payload is malformed or violates its invariants"""


class CheckpointFormatError(TrackedException):
    """Raised when a model checkpoint cannot be parsed"""


class ShapeMismatchError(TrackedException):
    """Raised when tensor or matrix shapes are inconsistent"""


class NonFiniteError(TrackedException):
    """Raised when NaN or Inf values show up in signals, tensors or gradients"""


class GraphError(TrackedException):
    """Raised when backward is requested without a recorded forward pass"""


class EmptyDatasetError(TrackedException):
    """Raised when training is requested on an empty dataset"""


class TrainingDivergedError(TrackedException):
    """Raised when the training loss stops being finite"""

    def __init__(self, epoch: int, loss: float) -> None:
        self.epoch = epoch
        super().__init__(f"Non-finite loss {loss} at epoch {epoch}")


class SignalTooShortError(TrackedException):
    """Raised when a signal is shorter than one STOI analysis segment"""


class MagnitudeRangeError(TrackedException):
    """Raised when a stimulation magnitude is outside [0, 1]"""


class InsufficientFilesError(TrackedException):
    """Raised when a corpus has fewer files than the requested split needs"""


class DataLeakageError(TrackedException):
    """Raised when a test file also appears in the train or validation split"""


class ManifestFormatError(TrackedException):
    """Raised when a corpus manifest cannot be parsed"""


class ConfigFileError(TrackedException):
    """Raised when the experiment configuration file cannot be read or is not a mapping"""
