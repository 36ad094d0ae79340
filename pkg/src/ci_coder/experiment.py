"""
Corpus management and the ACE-vs-model comparison experiment.

A corpus manifest records which WAV file went to which split, how audio was
conditioned and which ACE configuration produced the stored targets, so an
experiment can be reproduced from the manifest and the seed alone.
"""
from __future__ import annotations

import csv
import io
import json
from collections.abc import Callable
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from loguru import logger

from .ace_codec import encode
from .audio_io import list_wavs, prepare_signal, read_wav, write_wav
from .AudioSignal import AudioSignal
from .Electrodogram import Electrodogram
from .exceptions import AudioFileError, DataLeakageError, InsufficientFilesError, ManifestFormatError
from .metrics import metrics
from .models import AceConfig, ComparisonReport, ComparisonRow, ExperimentConfig, GlobalConfig, Preprocessing
from .neural_coder import NeuralCoder, encoder_features, infer
from .report_generator import construct_summary
from .stoi_metric import stoi
from .training import TrainingExample, TrainingHistory, train
from .Types import FilePath
from .utils import parallel_map, sha256_hexdigest, time_execution, write_bytes_atomic, write_text_atomic
from .vocoder import synthesize

MANIFEST_HEADER = "# ci-coder corpus manifest v1"
MANIFEST_FILE = "manifest.txt"
TARGETS_DIR = "targets"
SPLITS = ("train", "val", "test")

REPORT_FILE = "report.csv"
HISTORY_FILE = "history.csv"
CURVES_FILE = "curves.dat"
CHECKPOINT_FILE = "model.nckp"
METRICS_FILE = "metrics.prom"
AUDIO_DIR = "audio"

ElectrodogramCoder = Callable[[AudioSignal], Electrodogram]


def ace_config_hash(config: AceConfig) -> str:
    """sha256 of the canonical JSON form of an ACE configuration"""
    return sha256_hexdigest(json.dumps(config.plain_dict(), sort_keys=True, separators=(",", ":")))


@dataclass(frozen=True)
class ManifestEntry:
    split: str
    duration_s: float
    wav_path: str
    egrm_path: str


@dataclass
class CorpusManifest:
    entries: list[ManifestEntry]
    preprocessing: Preprocessing
    ace_config_hash: str
    seed: int
    split_interpretation: str = ""
    skipped: list[tuple[str, str]] = field(default_factory=list)
    root: Path = field(default_factory=Path)

    def split(self, name: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == name]

    def target_path(self, entry: ManifestEntry) -> Path:
        """electrodogram paths are stored relative to the manifest directory"""
        return self.root / entry.egrm_path

    def to_text(self) -> str:
        lines = [
            MANIFEST_HEADER,
            f"seed\t{self.seed}",
            f"sample_rate_hz\t{self.preprocessing.sample_rate_hz}",
            f"normalize_rms\t{str(self.preprocessing.normalize_rms).lower()}",
            f"target_rms_dbfs\t{self.preprocessing.target_rms_dbfs!r}",
            f"ace_config_hash\t{self.ace_config_hash}",
            f"split_interpretation\t{self.split_interpretation}",
        ]
        lines.extend(f"skipped\t{path}\t{reason}" for path, reason in self.skipped)
        lines.extend(f"entry\t{e.split}\t{e.duration_s:.6f}\t{e.wav_path}\t{e.egrm_path}" for e in self.entries)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, root: FilePath = ".") -> CorpusManifest:
        lines = text.splitlines()
        if not lines or lines[0].strip() != MANIFEST_HEADER:
            raise ManifestFormatError(f"Missing manifest header '{MANIFEST_HEADER}'")

        fields: dict[str, str] = {}
        entries: list[ManifestEntry] = []
        skipped: list[tuple[str, str]] = []

        for number, line in enumerate(lines[1:], start=2):
            if not line.strip() or line.startswith("#"):
                continue
            key, _, rest = line.partition("\t")
            try:
                if key == "entry":
                    split, duration, wav_path, egrm_path = rest.split("\t")
                    if split not in SPLITS:
                        raise ValueError(f"unknown split '{split}'")
                    entries.append(ManifestEntry(split, float(duration), wav_path, egrm_path))
                elif key == "skipped":
                    path, _, reason = rest.partition("\t")
                    skipped.append((path, reason))
                else:
                    fields[key] = rest
            except ValueError as e:
                raise ManifestFormatError(f"Manifest line {number}: {e}") from e

        try:
            preprocessing = Preprocessing(
                sample_rate_hz=int(fields["sample_rate_hz"]),
                normalize_rms=fields["normalize_rms"] == "true",
                target_rms_dbfs=float(fields["target_rms_dbfs"]),
            )
            return cls(
                entries=entries,
                preprocessing=preprocessing,
                ace_config_hash=fields["ace_config_hash"],
                seed=int(fields["seed"]),
                split_interpretation=fields.get("split_interpretation", ""),
                skipped=skipped,
                root=Path(root),
            )
        except KeyError as e:
            raise ManifestFormatError(f"Manifest misses the '{e.args[0]}' field") from e
        except ValueError as e:
            raise ManifestFormatError(f"Manifest header is malformed: {e}") from e

    def save(self, path: FilePath) -> Path:
        return write_text_atomic(path, self.to_text())

    @classmethod
    def load(cls, path: FilePath) -> CorpusManifest:
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as e:
            raise ManifestFormatError(f"Cannot read manifest {path}: {e}") from e
        return cls.from_text(text, root=path.parent)


def _split_interpretation(split: ExperimentConfig) -> str:
    return (
        f"{split.train_files} train / {split.val_files} val / {split.test_files} test files, "
        "validation and test disjoint from training"
    )


@dataclass(frozen=True)
class _EncodedFile:
    wav_path: Path
    duration_s: float | None
    electrodogram: Electrodogram | None
    error: str | None


def _encode_candidate(path: Path, ace: AceConfig, preprocessing: Preprocessing) -> _EncodedFile:
    try:
        signal = read_wav(path)
    except AudioFileError as e:
        logger.warning(f"Skipping unreadable file: {e}")
        return _EncodedFile(path, None, None, e.reason if e.chunk is None else f"chunk '{e.chunk}': {e.reason}")
    return _EncodedFile(path, signal.duration_s, encode(prepare_signal(signal, preprocessing), ace), None)


@time_execution
def build_dataset(
    wav_dir: FilePath, out_dir: FilePath, ace: AceConfig, split: ExperimentConfig, seed: int | None = None
) -> CorpusManifest:
    """
    seeded shuffle of the WAV files below wav_dir, split into train/val/test and
    one ACE electrodogram per selected file; the manifest is written to out_dir
    """
    seed = split.seed if seed is None else seed
    out_dir = Path(out_dir)
    wavs = list_wavs(wav_dir)
    needed = split.total_files
    if len(wavs) < needed:
        raise InsufficientFilesError(f"Insufficient files: {wav_dir} holds {len(wavs)} WAV files, split needs {needed}")

    preprocessing = split.preprocessing(ace.sample_rate_hz)
    candidates = [wavs[i] for i in np.random.default_rng(seed).permutation(len(wavs))]
    selected: list[_EncodedFile] = []
    skipped: list[tuple[str, str]] = []

    # encode in shuffled order until enough readable files are found
    position = 0
    while len(selected) < needed and position < len(candidates):
        chunk = candidates[position : position + needed - len(selected)]
        position += len(chunk)
        for result in parallel_map(lambda p: _encode_candidate(p, ace, preprocessing), chunk):
            if result.error is None:
                selected.append(result)
            else:
                skipped.append((str(result.wav_path), result.error))

    if len(selected) < needed:
        raise InsufficientFilesError(
            f"Insufficient files: only {len(selected)} of {len(wavs)} WAV files are readable, split needs {needed}"
        )

    labels = ["train"] * split.train_files + ["val"] * split.val_files + ["test"] * split.test_files
    entries: list[ManifestEntry] = []
    for index, (label, item) in enumerate(zip(labels, selected)):
        assert item.electrodogram is not None and item.duration_s is not None
        egrm_path = f"{TARGETS_DIR}/{index:04d}_{item.wav_path.stem}.egrm"
        item.electrodogram.save(out_dir / egrm_path)
        entries.append(ManifestEntry(label, item.duration_s, str(item.wav_path.resolve()), egrm_path))

    manifest = CorpusManifest(
        entries=entries,
        preprocessing=preprocessing,
        ace_config_hash=ace_config_hash(ace),
        seed=seed,
        split_interpretation=_split_interpretation(split),
        skipped=skipped,
        root=out_dir,
    )
    manifest.save(out_dir / MANIFEST_FILE)
    logger.info(f"Corpus manifest with {len(entries)} files ({len(skipped)} skipped) written to {out_dir}")
    return manifest


def check_disjoint(manifest: CorpusManifest) -> None:
    """raise when a test file also appears in the train or validation split"""
    seen: dict[str, str] = {}
    for entry in manifest.entries:
        if entry.split != "test":
            seen[sha256_hexdigest(str(Path(entry.wav_path).resolve()))] = entry.split

    for entry in manifest.split("test"):
        other = seen.get(sha256_hexdigest(str(Path(entry.wav_path).resolve())))
        if other is not None:
            raise DataLeakageError(f"Test file {entry.wav_path} also appears in the {other} split")


def _load_signal(entry: ManifestEntry, manifest: CorpusManifest) -> AudioSignal:
    return prepare_signal(read_wav(entry.wav_path), manifest.preprocessing)


def load_examples(manifest: CorpusManifest, split: str, ace: AceConfig) -> list[TrainingExample]:
    """encoder features of a split paired with their stored ACE targets"""

    def load(entry: ManifestEntry) -> TrainingExample:
        features = encoder_features(_load_signal(entry, manifest), ace)
        target = Electrodogram.load(manifest.target_path(entry))
        if target.magnitudes.shape != features.shape:
            raise ManifestFormatError(
                f"Target {entry.egrm_path} is {target.magnitudes.shape}, features of {entry.wav_path} are "
                f"{features.shape}; rebuild the dataset with the current ACE configuration"
            )
        return TrainingExample(features, target, Path(entry.wav_path).name)

    return parallel_map(load, manifest.split(split))


def _check_targets_match(manifest: CorpusManifest, ace: AceConfig) -> None:
    expected = ace_config_hash(ace)
    if manifest.ace_config_hash != expected:
        raise ManifestFormatError(
            f"Manifest targets were built with ACE configuration {manifest.ace_config_hash[:12]}, "
            f"the current one is {expected[:12]}"
        )


def write_curves(history: TrainingHistory, path: FilePath) -> Path:
    """training curves as a whitespace-separated table for gnuplot"""
    lines = ["# epoch train_loss val_loss lr"]
    lines.extend(f"{r.epoch} {r.train_loss!r} {r.val_loss!r} {r.lr!r}" for r in history.records)
    return write_text_atomic(path, "\n".join(lines) + "\n")


def report_csv(report: ComparisonReport) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(("file", "stoi_ace", "stoi_model"))
    for row in report.rows:
        writer.writerow((row.file, f"{row.stoi_ace:.6f}", f"{row.stoi_model:.6f}"))
    return buffer.getvalue()


def _train_coder(manifest: CorpusManifest, config: GlobalConfig, out_dir: Path) -> tuple[NeuralCoder, TrainingHistory]:
    train_set = load_examples(manifest, "train", config.ace)
    val_set = load_examples(manifest, "val", config.ace)
    result = train(train_set, val_set, config.training, config.model)
    result.coder.save(out_dir / CHECKPOINT_FILE)
    result.history.save(out_dir / HISTORY_FILE)
    write_curves(result.history, out_dir / CURVES_FILE)
    return result.coder, result.history


def _score_rows(
    manifest: CorpusManifest,
    config: GlobalConfig,
    predict: ElectrodogramCoder,
    out_dir: Path,
    save_audio: bool,
) -> list[ComparisonRow]:
    def score(entry: ManifestEntry) -> ComparisonRow:
        clean = _load_signal(entry, manifest)
        name = Path(entry.wav_path).stem
        ace_audio = synthesize(Electrodogram.load(manifest.target_path(entry)), config.vocoder, config.ace, name)
        model_audio = synthesize(predict(clean), config.vocoder, config.ace, name)

        if save_audio:
            write_wav(ace_audio, out_dir / AUDIO_DIR / f"{name}_ace.wav")
            write_wav(model_audio, out_dir / AUDIO_DIR / f"{name}_model.wav")

        row = ComparisonRow(
            file=Path(entry.wav_path).name,
            stoi_ace=stoi(clean, ace_audio, config.stoi).score,
            stoi_model=stoi(clean, model_audio, config.stoi).score,
        )
        logger.info(f"{row.file}: STOI ACE {row.stoi_ace:.4f}, model {row.stoi_model:.4f}")
        return row

    rows = parallel_map(score, manifest.split("test"))
    for row in rows:
        metrics.register_score("ace", row.stoi_ace)
        metrics.register_score("model", row.stoi_model)
    return rows


@time_execution
def run_experiment(
    manifest: CorpusManifest,
    config: GlobalConfig,
    out_dir: FilePath,
    coder: NeuralCoder | None = None,
    electrodogram_coder: ElectrodogramCoder | None = None,
    save_audio: bool | None = None,
) -> ComparisonReport:
    """
    train (unless a coder is given), vocode the ACE and model electrodograms of every test file,
    score both against the clean original and persist the comparison
    """
    out_dir = Path(out_dir)
    check_disjoint(manifest)
    _check_targets_match(manifest, config.ace)
    if not manifest.split("test"):
        raise InsufficientFilesError("Insufficient files: the manifest has no test files")

    metrics.reset()

    history: TrainingHistory | None = None
    history_file: str | None = None
    predict = electrodogram_coder
    if predict is None:
        if coder is None:
            coder, history = _train_coder(manifest, config, out_dir)
            history_file = HISTORY_FILE
        trained = coder

        def predict_with_model(signal: AudioSignal) -> Electrodogram:
            return infer(signal, trained, config.ace)

        predict = predict_with_model

    save_audio = config.experiment.save_audio if save_audio is None else save_audio
    rows = _score_rows(manifest, config, predict, out_dir, save_audio)

    report = ComparisonReport.from_rows(
        rows,
        history_file=history_file,
        best_epoch=history.best_epoch if history else None,
        config_hash=sha256_hexdigest(json.dumps(config.plain_dict(), sort_keys=True)),
        inverse_lgf=config.vocoder.inverse_lgf,
    )
    write_text_atomic(out_dir / REPORT_FILE, report_csv(report))
    construct_summary(report, out_dir, history)
    write_bytes_atomic(out_dir / METRICS_FILE, metrics.exposition())

    logger.info(
        f"Mean STOI over {len(rows)} test files: ACE {report.mean_ace:.4f}, model {report.mean_model:.4f}, "
        f"gap {report.mean_gap:.4f}"
    )
    return report

