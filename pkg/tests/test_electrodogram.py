from pathlib import Path

import numpy as np
import pytest

from ci_coder.Electrodogram import HEADER, Electrodogram, deserialize, serialize
from ci_coder.exceptions import ElectrodogramFormatError


def make_electrodogram(channels: int = 4, frames: int = 6) -> Electrodogram:
    magnitudes = np.random.default_rng(3).uniform(0, 1, (channels, frames))
    magnitudes[magnitudes < 0.5] = 0
    return Electrodogram(magnitudes, 1000.0)


def test_serialization_is_bit_exact() -> None:
    original = make_electrodogram()
    back = deserialize(serialize(original))
    assert back.frame_rate_hz == 1000.0
    assert back.magnitudes.dtype == np.float32
    assert back.magnitudes.tobytes() == original.magnitudes.tobytes()


def test_random_electrodograms_survive_a_byte_round_trip() -> None:
    rng = np.random.default_rng(100)
    for _ in range(100):
        channels, frames = int(rng.integers(1, 23)), int(rng.integers(0, 200))
        magnitudes = rng.uniform(0, 1, (channels, frames))
        magnitudes[magnitudes < rng.uniform()] = 0
        payload = serialize(Electrodogram(magnitudes, float(rng.uniform(100, 5000))))
        assert serialize(deserialize(payload)) == payload


def test_payload_size() -> None:
    assert len(serialize(make_electrodogram(3, 5))) == HEADER.itemsize + 3 * 5 * 4


def test_empty_electrodogram_round_trips() -> None:
    back = deserialize(serialize(Electrodogram(np.zeros((22, 0)), 1000.0)))
    assert (back.num_channels, back.num_frames) == (22, 0)


def test_save_and_load(tmp_path: Path) -> None:
    original = make_electrodogram()
    path = original.save(tmp_path / "nested" / "a.egrm")
    assert Electrodogram.load(path).magnitudes.tobytes() == original.magnitudes.tobytes()
    assert list(path.parent.iterdir()) == [path]


def test_selection_mask_and_counts() -> None:
    electrodogram = Electrodogram(np.array([[0.0, 0.5], [0.2, 0.0], [0.3, 0.0]]), 1000.0)
    assert electrodogram.selection_mask.tolist() == [[False, True], [True, False], [True, False]]
    assert electrodogram.nonzero_counts().tolist() == [2, 1]


@pytest.mark.parametrize("value", [-0.1, 1.5, np.nan])
def test_out_of_range_magnitudes_are_rejected(value: float) -> None:
    with pytest.raises(ElectrodogramFormatError):
        Electrodogram(np.array([[value]]), 1000.0)


def test_bad_frame_rate_is_rejected() -> None:
    with pytest.raises(ElectrodogramFormatError):
        Electrodogram(np.zeros((1, 1)), 0.0)


def test_bad_magic_is_rejected() -> None:
    payload = bytearray(serialize(make_electrodogram()))
    payload[:4] = b"WAVE"
    with pytest.raises(ElectrodogramFormatError, match="bad magic"):
        deserialize(bytes(payload))


def test_unknown_version_is_rejected() -> None:
    payload = bytearray(serialize(make_electrodogram()))
    payload[4] = 2
    with pytest.raises(ElectrodogramFormatError, match="version"):
        deserialize(bytes(payload))


def test_truncated_payload_is_rejected() -> None:
    payload = serialize(make_electrodogram())
    with pytest.raises(ElectrodogramFormatError, match="Dimension overflow"):
        deserialize(payload[:-1])
    with pytest.raises(ElectrodogramFormatError, match="Malformed header"):
        deserialize(payload[:10])


def test_load_reports_the_path(tmp_path: Path) -> None:
    path = tmp_path / "broken.egrm"
    path.write_bytes(b"EGRM")
    with pytest.raises(ElectrodogramFormatError, match="broken.egrm"):
        Electrodogram.load(path)
