import argparse
import logging
import sys

from pydantic import ValidationError

from pbnc import __version__, config
from pbnc.errors import ExitCode, PbncError
from pbnc.routes import codec, family, lift, optimize, simulate, threshold
from pbnc.routes.common import common_parser

logger = logging.getLogger("pbnc")


class CommandParser(argparse.ArgumentParser):
    """Argument parser that reports usage errors with the usage exit code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(ExitCode.USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> CommandParser:
    parser = CommandParser(
        prog="pbnc",
        description="Design, lift, encode, decode and simulate protograph-based batched network codes",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True, parser_class=CommandParser)
    parents = [common_parser()]

    # Include commands
    threshold.register(subparsers, parents)
    optimize.register(subparsers, parents)
    lift.register(subparsers, parents)
    simulate.register(subparsers, parents)
    codec.register(subparsers, parents)
    family.register(subparsers, parents)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=logging.DEBUG if config.DEBUG else config.LOG_LEVEL,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except PbncError as e:
        logger.error(f"{args.command}: {e.detail}")
        return int(e.exit_code)
    except ValidationError as e:
        logger.error(f"{args.command}: invalid parameters: {str(e)}")
        return int(ExitCode.INPUT_ERROR)


if __name__ == "__main__":
    sys.exit(main())
