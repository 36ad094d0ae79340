import argparse
from pathlib import Path

from loguru import logger

from ci_coder.experiment import CorpusManifest, load_examples
from ci_coder.models import GlobalConfig
from ci_coder.neural_coder import NeuralCoder, infer
from ci_coder.training import train
from dependencies import collect_inputs, output_file, read_signal, require


def run_train(args: argparse.Namespace, config: GlobalConfig) -> None:
    """train the neural coder on the train/val splits of a corpus manifest"""
    require(args, manifest="--manifest", checkpoint="--checkpoint")
    manifest = CorpusManifest.load(args.manifest)
    result = train(
        load_examples(manifest, "train", config.ace),
        load_examples(manifest, "val", config.ace),
        config.training,
        config.model,
    )
    result.coder.save(args.checkpoint)
    if args.history:
        result.history.save(args.history)
        logger.info(f"Training history written to {args.history}")
    print(args.checkpoint)  # noqa: T201


def run_infer(args: argparse.Namespace, config: GlobalConfig) -> None:
    """predict electrodograms for WAV files with a trained checkpoint"""
    require(args, checkpoint="--checkpoint", input="--in", out="--out")
    coder = NeuralCoder.load(args.checkpoint)
    for wav in collect_inputs(args.input, ".wav"):
        electrodogram = infer(read_signal(wav, config), coder, config.ace)
        path = electrodogram.save(output_file(args.out, wav, ".egrm"))
        logger.info(f"{wav.name}: {electrodogram.num_frames} predicted frames -> {path}")
        print(path)  # noqa: T201


def add_parsers(subparsers: argparse._SubParsersAction, parents: list[argparse.ArgumentParser]) -> None:
    train_parser = subparsers.add_parser("train", parents=parents, help=run_train.__doc__)
    train_parser.add_argument("--manifest", type=Path, help="corpus manifest written by the dataset command")
    train_parser.add_argument("--checkpoint", type=Path, help="where to store the best model")
    train_parser.add_argument("--history", type=Path, help="optional CSV of per-epoch losses and learning rates")
    train_parser.set_defaults(handler=run_train, parser=train_parser)

    infer_parser = subparsers.add_parser("infer", parents=parents, help=run_infer.__doc__)
    infer_parser.add_argument("--checkpoint", type=Path, help="trained model checkpoint")
    infer_parser.add_argument("--in", dest="input", type=Path, help="WAV file or directory of WAV files")
    infer_parser.add_argument("--out", type=Path, help="directory receiving the predicted .egrm files")
    infer_parser.set_defaults(handler=run_infer, parser=infer_parser)
