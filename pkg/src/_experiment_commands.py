import argparse
from pathlib import Path

from loguru import logger

from ci_coder.experiment import CHECKPOINT_FILE, REPORT_FILE, CorpusManifest, build_dataset, run_experiment
from ci_coder.models import GlobalConfig
from ci_coder.neural_coder import NeuralCoder
from ci_coder.utils import write_bytes_atomic
from dependencies import require


def run_dataset(args: argparse.Namespace, config: GlobalConfig) -> None:
    """split a WAV corpus and build its ACE target electrodograms"""
    require(args, input="--in", out="--out")
    manifest = build_dataset(args.input, args.out, config.ace, config.experiment, args.seed)
    for split in ("train", "val", "test"):
        logger.info(f"{split}: {len(manifest.split(split))} files")
    print(args.out / "manifest.txt")  # noqa: T201


def run_evaluate(args: argparse.Namespace, config: GlobalConfig) -> None:
    """compare vocoded ACE and model electrodograms of the test split by STOI"""
    require(args, manifest="--manifest", out="--out")
    manifest = CorpusManifest.load(args.manifest)

    coder = None
    store_trained = args.checkpoint is not None and not args.checkpoint.exists()
    if store_trained:
        logger.info(f"No checkpoint at {args.checkpoint} yet, a model will be trained and stored there")
    elif args.checkpoint is not None and not args.retrain:
        coder = NeuralCoder.load(args.checkpoint)

    report = run_experiment(manifest, config, args.out, coder=coder, save_audio=args.save_audio or None)

    if store_trained:
        write_bytes_atomic(args.checkpoint, (args.out / CHECKPOINT_FILE).read_bytes())
        logger.info(f"Trained checkpoint copied to {args.checkpoint}")

    print(f"{report.mean_ace:.4f}\t{report.mean_model:.4f}\t{report.mean_gap:.4f}")  # noqa: T201
    logger.info(f"Report written to {args.out / REPORT_FILE}")


def add_parsers(subparsers: argparse._SubParsersAction, parents: list[argparse.ArgumentParser]) -> None:
    dataset_parser = subparsers.add_parser("dataset", parents=parents, help=run_dataset.__doc__)
    dataset_parser.add_argument("--in", dest="input", type=Path, help="directory of WAV files")
    dataset_parser.add_argument("--out", type=Path, help="directory receiving the manifest and targets")
    dataset_parser.add_argument("--seed", type=int, help="shuffle seed (defaults to experiment.seed)")
    dataset_parser.set_defaults(handler=run_dataset, parser=dataset_parser)

    evaluate_parser = subparsers.add_parser("evaluate", parents=parents, help=run_evaluate.__doc__)
    evaluate_parser.add_argument("--manifest", type=Path, help="corpus manifest written by the dataset command")
    evaluate_parser.add_argument(
        "--checkpoint", type=Path, help="trained model, trained and saved here when the file does not exist"
    )
    evaluate_parser.add_argument("--out", type=Path, help="directory receiving the report files")
    evaluate_parser.add_argument("--retrain", action="store_true", help="train even if --checkpoint is given")
    evaluate_parser.add_argument("--save-audio", action="store_true", help="also write the vocoded WAV files")
    evaluate_parser.set_defaults(handler=run_evaluate, parser=evaluate_parser)
