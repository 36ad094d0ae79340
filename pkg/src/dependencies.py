import argparse
from pathlib import Path
from typing import Any

import yaml
from loguru import logger

from ci_coder.audio_io import list_wavs, prepare_signal, read_wav
from ci_coder.AudioSignal import AudioSignal
from ci_coder.exceptions import ConfigFileError
from ci_coder.models import GlobalConfig


def load_config(path: Path | None) -> GlobalConfig:
    """read the YAML experiment configuration; defaults are used when no file is given"""
    if path is None:
        return GlobalConfig()

    try:
        raw: Any = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigFileError(f"Cannot read configuration file {path}: {e.strerror}") from e
    except yaml.YAMLError as e:
        raise ConfigFileError(f"Configuration file {path} is not valid YAML: {' '.join(str(e).split())}") from e

    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigFileError(f"Configuration file {path} must hold a mapping of sections")

    logger.debug(f"Loaded configuration from {path}")
    return GlobalConfig.parse_obj(raw)


def dump_config(config: GlobalConfig) -> str:
    """the full effective configuration; load_config of the output gives back the same config"""
    return str(yaml.safe_dump(config.plain_dict(), sort_keys=False, allow_unicode=True))


def collect_inputs(path: Path, suffix: str) -> list[Path]:
    """a single file or every matching file below a directory"""
    if path.is_dir():
        files = list_wavs(path) if suffix == ".wav" else sorted(path.rglob(f"*{suffix}"))
        if not files:
            raise ConfigFileError(f"No {suffix} files found below {path}")
        return files
    return [path]


def output_file(out_dir: Path, source: Path, suffix: str) -> Path:
    return out_dir / f"{source.stem}{suffix}"


def read_signal(path: Path, config: GlobalConfig) -> AudioSignal:
    """read a WAV file and condition it the way the dataset builder does"""
    preprocessing = config.experiment.preprocessing(config.ace.sample_rate_hz)
    return prepare_signal(read_wav(path), preprocessing)


def require(args: argparse.Namespace, **flags: str) -> None:
    """report missing options (destination=flag) the way argparse does: usage on stderr, exit code 2"""
    missing = [flag for dest, flag in flags.items() if getattr(args, dest) is None]
    if missing:
        args.parser.error(f"the following arguments are required: {', '.join(missing)}")
