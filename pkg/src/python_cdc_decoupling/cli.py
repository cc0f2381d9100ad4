import argparse
import sys
from typing import Optional, Sequence

from python_cdc_decoupling.classes.config import ConfigError
from python_cdc_decoupling.datagen import DatagenError
from python_cdc_decoupling.dataset_io import DatasetFormatError
from python_cdc_decoupling.fusion import FusionError
from python_cdc_decoupling.handler import CommandHandler
from python_cdc_decoupling.numerics import NumericsError
from python_cdc_decoupling.objectives import ObjectiveError
from python_cdc_decoupling.templates import IncompatibleCheckpoint, MalformedCheckpoint
from python_cdc_decoupling.tools.logger import logger
from python_cdc_decoupling.trainer import TrainingError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_NUMERIC = 4
EXIT_INCOMPATIBLE = 5

# First matching family wins.
EXIT_CODES: list[tuple[type, int]] = [
    (IncompatibleCheckpoint, EXIT_INCOMPATIBLE),
    (DatasetFormatError, EXIT_IO),
    (MalformedCheckpoint, EXIT_IO),
    (TrainingError, EXIT_IO),
    (OSError, EXIT_IO),
    (ConfigError, EXIT_USAGE),
    (DatagenError, EXIT_USAGE),
    (ObjectiveError, EXIT_NUMERIC),
    (FusionError, EXIT_NUMERIC),
    (NumericsError, EXIT_NUMERIC),
]


def exit_code_for(error: BaseException) -> Optional[int]:
    for family, code in EXIT_CODES:
        if isinstance(error, family):
            return code
    return None


def build_parser(handler: CommandHandler) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cdc", description="Causality-guided decoupling of prompt templates")
    commands = parser.add_subparsers(dest="command", required=True)
    for name, action_data in handler.command_actions.items():
        sub = commands.add_parser(name, help=action_data["help"], argument_default=argparse.SUPPRESS)
        for names, kwargs in action_data["flags"]:
            sub.add_argument(*names, **kwargs)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    handler = CommandHandler()
    args = vars(build_parser(handler).parse_args(argv))
    command = args.pop("command")
    try:
        return handler.process_command(command, args)
    except Exception as e:
        code = exit_code_for(e)
        if code is None:
            raise
        logger.error("%s failed: %s: %s", command, type(e).__name__, e)
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
