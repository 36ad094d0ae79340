import argparse
import sys
from collections.abc import Sequence
from pathlib import Path

import pydantic
from loguru import logger

import _codec_commands
import _experiment_commands
import _model_commands
from _logging import HANDLERS
from ci_coder.exceptions import TrackedException
from dependencies import dump_config, load_config

COMMAND_MODULES = (_codec_commands, _model_commands, _experiment_commands)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML configuration file (defaults are used when absent)")
    common.add_argument(
        "--print-config", action="store_true", help="print the effective configuration as YAML and exit"
    )

    parser = argparse.ArgumentParser(
        prog="ci-coder",
        description="Cochlear-implant sound coding: ACE encoding, a neural coder, vocoding and STOI scoring",
    )
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)
    for module in COMMAND_MODULES:
        module.add_parsers(subparsers, [common])
    return parser


def _single_line(error: BaseException) -> str:
    return " ".join(str(error).split()) or error.__class__.__name__


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    # apply logging configuration
    logger.configure(handlers=HANDLERS)

    try:
        config = load_config(args.config)
        if args.print_config:
            print(dump_config(config), end="")  # noqa: T201
            return 0
        args.handler(args, config)
    except SystemExit as e:
        return int(e.code or 0)
    except KeyboardInterrupt:
        logger.warning("Interrupted")
        return 130
    except pydantic.ValidationError as e:
        logger.error(f"Invalid configuration: {_single_line(e)}")
        return 1
    except (TrackedException, OSError, ValueError) as e:
        logger.error(f"{args.command} failed: {_single_line(e)}")
        return 1

    return 0


if __name__ == "__main__":
    sys.exit(main())
