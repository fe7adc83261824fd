"""
``keap`` command line: pretrain, gradcheck, ablate, eval, filter-kg, gen-synth.

Every subcommand accepts ``--config FILE`` plus any configuration key as a
``--key value`` flag. Flags override the file, the file overrides defaults.

Exit codes: 0 success, 1 gradient check failed, 2 usage/config/input
error, 3 numerical failure during training.
"""

import argparse
import sys
from typing import Any, Callable, Dict, List, Optional, Set

from cli.commands import (
    ABLATE_DEFAULTS,
    EXIT_NUMERICAL,
    EXIT_USAGE,
    GRADCHECK_DEFAULTS,
    cmd_ablate,
    cmd_eval,
    cmd_filter_kg,
    cmd_gen_synth,
    cmd_gradcheck,
    cmd_pretrain,
)
from cli.run_config import RunConfig, parse_flag_pairs, resolve
from core.exceptions import KeapError, NumericalError
from core.logging.logger import get_logger

logger = get_logger(__name__)

Command = Callable[[RunConfig, Set[str]], int]

COMMANDS: Dict[str, Command] = {
    "pretrain": cmd_pretrain,
    "gradcheck": cmd_gradcheck,
    "ablate": cmd_ablate,
    "eval": cmd_eval,
    "filter-kg": cmd_filter_kg,
    "gen-synth": cmd_gen_synth,
}

DEFAULTS: Dict[str, Dict[str, Any]] = {
    "gradcheck": GRADCHECK_DEFAULTS,
    "ablate": ABLATE_DEFAULTS,
}

HELP = {
    "pretrain": "train on a triplet file, write loss.csv and checkpoints",
    "gradcheck": "finite-difference check of every learnable tensor",
    "ablate": "train each variant x mask ratio cell and tabulate the results",
    "eval": "probe a checkpoint on a downstream toy task",
    "filter-kg": "drop triplets whose protein appears in a holdout list",
    "gen-synth": "write a synthetic knowledge graph or toy task file",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="keap",
        description="Knowledge-enhanced masked protein modeling",
        epilog="Any configuration key may be passed as --key value, e.g. --hidden-dim 32",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        cmd = sub.add_parser(name, help=HELP[name])
        cmd.add_argument("--config", type=str, default=None, help="flat key = value config file")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args, rest = parser.parse_known_args(argv)
    try:
        config, explicit = resolve(DEFAULTS.get(args.command), args.config, parse_flag_pairs(rest))
        return COMMANDS[args.command](config, explicit)
    except NumericalError as e:
        logger.error("numerical_failure", command=args.command, step=e.step, error=str(e))
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (KeapError, FileNotFoundError) as e:
        logger.error("command_failed", command=args.command, error_type=type(e).__name__, error=str(e))
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
