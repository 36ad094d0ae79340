from pathlib import Path

import numpy as np
import pytest
from scipy.io import wavfile

from ci_coder.audio_io import frame_signal, normalize_rms, overlap_add, read_wav, resample, taper, write_wav
from ci_coder.AudioSignal import AudioSignal
from ci_coder.exceptions import AudioFileError, NonFiniteError
from ci_coder.models import WindowKind


def test_single_pcm16_sample_is_scaled(tmp_path: Path) -> None:
    path = tmp_path / "one.wav"
    wavfile.write(path, 16000, np.array([32767], dtype=np.int16))
    signal = read_wav(path)
    assert signal.sample_rate_hz == 16000
    assert signal.samples.tolist() == [32767 / 32768]


def test_float32_files_are_read_unscaled(tmp_path: Path) -> None:
    path = tmp_path / "float.wav"
    wavfile.write(path, 8000, np.array([0.25, -0.5], dtype=np.float32))
    assert read_wav(path).samples.tolist() == [0.25, -0.5]


def test_stereo_is_mixed_down(tmp_path: Path) -> None:
    path = tmp_path / "stereo.wav"
    wavfile.write(path, 16000, np.array([[16384, 0], [0, -16384]], dtype=np.int16))
    assert read_wav(path).samples.tolist() == [0.25, -0.25]


def test_missing_file_raises(tmp_path: Path) -> None:
    with pytest.raises(AudioFileError, match="file not found"):
        read_wav(tmp_path / "nope.wav")


def test_garbage_file_names_the_riff_chunk(tmp_path: Path) -> None:
    path = tmp_path / "garbage.wav"
    path.write_bytes(b"this is not audio at all")
    with pytest.raises(AudioFileError) as info:
        read_wav(path)
    assert info.value.chunk == "RIFF"


def test_unsupported_codec_is_rejected(tmp_path: Path) -> None:
    path = tmp_path / "pcm8.wav"
    wavfile.write(path, 16000, np.array([1, 2, 3], dtype=np.uint8))
    with pytest.raises(AudioFileError, match="unsupported codec"):
        read_wav(path)


def test_write_then_read_is_within_one_lsb(tmp_path: Path, speech: AudioSignal) -> None:
    back = read_wav(write_wav(speech, tmp_path / "speech.wav"))
    assert back.sample_rate_hz == speech.sample_rate_hz
    assert np.max(np.abs(back.samples - speech.samples)) <= 1 / 32768


def test_write_clips_out_of_range_samples(tmp_path: Path) -> None:
    back = read_wav(write_wav(AudioSignal(np.array([2.0, -2.0]), 16000), tmp_path / "loud.wav"))
    assert back.samples[0] == pytest.approx(32767 / 32768)
    assert back.samples[1] == -1.0


def test_non_finite_samples_are_rejected() -> None:
    with pytest.raises(NonFiniteError):
        AudioSignal(np.array([0.0, np.nan]), 16000)


def test_resample_keeps_tone_frequency() -> None:
    rate = 44100
    t = np.arange(rate) / rate
    tone = AudioSignal(np.sin(2 * np.pi * 440 * t), rate)
    out = resample(tone, 16000)
    assert len(out) == 16000
    spectrum = np.abs(np.fft.rfft(out.samples))
    peak_hz = np.argmax(spectrum) * 16000 / len(out)
    assert abs(peak_hz - 440) <= 1


@pytest.mark.parametrize("length", [0, 1, 999])
def test_resample_length_is_rounded(length: int) -> None:
    out = resample(AudioSignal(np.zeros(length), 44100), 16000)
    assert len(out) == int(np.floor(length * 16000 / 44100 + 0.5))


def test_resample_to_same_rate_is_identity(speech: AudioSignal) -> None:
    assert resample(speech, speech.sample_rate_hz) is speech


def test_frame_count_and_zero_padding() -> None:
    frames = frame_signal(np.arange(1, 101, dtype=float), 32, 16)
    assert len(frames) == 7
    assert np.count_nonzero(frames.frames[-1] == 0) == 28
    assert np.count_nonzero(frames.frames[5] == 0) == 12
    assert frames.frames[1, 0] == 17


def test_frames_without_padding_are_complete() -> None:
    frames = frame_signal(np.ones(100), 32, 16, pad_end=False)
    assert len(frames) == 5
    assert frame_signal(np.ones(10), 32, 16, pad_end=False).frames.shape == (0, 32)


def test_invalid_hop_is_rejected() -> None:
    with pytest.raises(ValueError):
        frame_signal(np.ones(10), 8, 9)


def test_hann_overlap_add_is_constant() -> None:
    frames = frame_signal(np.ones(512), 64, 32, WindowKind.HANN)
    rebuilt = overlap_add(frames.frames, 32)
    assert np.allclose(rebuilt[64:448], 1.0)


def test_explicit_window_must_match_frame_length() -> None:
    with pytest.raises(ValueError):
        taper(np.ones(3), 4)


def test_normalize_rms_hits_target(speech: AudioSignal) -> None:
    level = 20 * np.log10(normalize_rms(speech, -26.0).rms)
    assert level == pytest.approx(-26.0)


def test_normalize_rms_leaves_silence_alone() -> None:
    silence = AudioSignal(np.zeros(10), 16000)
    assert normalize_rms(silence) is silence
