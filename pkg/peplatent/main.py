"""Command-line entry point"""
from typing import Optional, Sequence
import logging
import sys

from pydantic import ValidationError

from peplatent.cli.commands import apply_seed, build_parser
from peplatent.errors import (
    ConfigurationError,
    InvalidArgumentError,
    MissingClusterError,
    ParseError,
    SamplingDivergenceError,
    TrainingDivergenceError,
)
from peplatent.models.run_config import load_run_config

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_INVALID = 2
EXIT_DIVERGED = 3

# errors that mean the inputs or the config are wrong
_INVALID = (
    ConfigurationError,
    InvalidArgumentError,
    ParseError,
    MissingClusterError,
    ValidationError,
    FileNotFoundError,
)
_DIVERGED = (TrainingDivergenceError, SamplingDivergenceError)


def exit_code_for(error: BaseException) -> int:
    """0 success, 2 config/validation, 3 numerical divergence, 1 anything else"""
    if isinstance(error, _DIVERGED):
        return EXIT_DIVERGED
    if isinstance(error, _INVALID):
        return EXIT_INVALID
    return EXIT_RUNTIME


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )

    try:
        config = apply_seed(load_run_config(args.config), args.seed)
        return args.handler(args, config)
    except Exception as e:
        code = exit_code_for(e)
        if isinstance(e, TrainingDivergenceError):
            logger.error(f"Training diverged at step {e.step}")
        logger.error(f"{args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
