import argparse
from pathlib import Path

from loguru import logger

from ci_coder.ace_codec import encode
from ci_coder.audio_io import read_wav, write_wav
from ci_coder.Electrodogram import Electrodogram
from ci_coder.models import GlobalConfig
from ci_coder.stoi_metric import stoi
from ci_coder.vocoder import synthesize
from dependencies import collect_inputs, output_file, read_signal, require


def run_encode(args: argparse.Namespace, config: GlobalConfig) -> None:
    """ACE-encode one WAV file or a directory of them into .egrm files"""
    require(args, input="--in", out="--out")
    for wav in collect_inputs(args.input, ".wav"):
        electrodogram = encode(read_signal(wav, config), config.ace)
        path = electrodogram.save(output_file(args.out, wav, ".egrm"))
        logger.info(f"{wav.name}: {electrodogram.num_frames} frames -> {path}")
        print(path)  # noqa: T201


def run_vocode(args: argparse.Namespace, config: GlobalConfig) -> None:
    """render electrodograms back to audio with the sine-wave vocoder"""
    require(args, input="--in", out="--out")
    for egrm in collect_inputs(args.input, ".egrm"):
        audio = synthesize(Electrodogram.load(egrm), config.vocoder, config.ace, name=egrm.stem)
        path = write_wav(audio, output_file(args.out, egrm, ".wav"))
        logger.info(f"{egrm.name}: {audio.duration_s:.2f} s of audio -> {path}")
        print(path)  # noqa: T201


def run_stoi(args: argparse.Namespace, config: GlobalConfig) -> None:
    """score a degraded WAV file against its clean reference"""
    require(args, clean="--clean", degraded="--degraded")
    result = stoi(read_wav(args.clean), read_wav(args.degraded), config.stoi)
    print(result.summary_json() if args.json else f"{result.score:.4f}")  # noqa: T201


def add_parsers(subparsers: argparse._SubParsersAction, parents: list[argparse.ArgumentParser]) -> None:
    encode_parser = subparsers.add_parser("encode", parents=parents, help=run_encode.__doc__)
    encode_parser.add_argument("--in", dest="input", type=Path, help="WAV file or directory of WAV files")
    encode_parser.add_argument("--out", type=Path, help="directory receiving the .egrm files")
    encode_parser.set_defaults(handler=run_encode, parser=encode_parser)

    vocode_parser = subparsers.add_parser("vocode", parents=parents, help=run_vocode.__doc__)
    vocode_parser.add_argument("--in", dest="input", type=Path, help=".egrm file or directory of .egrm files")
    vocode_parser.add_argument("--out", type=Path, help="directory receiving the vocoded WAV files")
    vocode_parser.set_defaults(handler=run_vocode, parser=vocode_parser)

    stoi_parser = subparsers.add_parser("stoi", parents=parents, help=run_stoi.__doc__)
    stoi_parser.add_argument("--clean", type=Path, help="clean reference WAV file")
    stoi_parser.add_argument("--degraded", type=Path, help="degraded WAV file")
    stoi_parser.add_argument("--json", action="store_true", help="print the full result as JSON")
    stoi_parser.set_defaults(handler=run_stoi, parser=stoi_parser)
