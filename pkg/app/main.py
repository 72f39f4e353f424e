"""
Command-Line Entry Point
hjb-exec <subcommand> --config <path> --out <dir> [--seed N] [--param NAME --values CSV]
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional, Union

from app.commands import analysis, experiments
from core.config import get_settings
from core.exceptions import HjbExecError, UsageError
from core.logging import configure_logging
from models.config_models import RunConfig
from services.config_service import load_config
from services.export_service import ResultWriter

logger = logging.getLogger(__name__)
settings = get_settings()

SUBCOMMANDS = ("validate", "bounds", "solve", "simulate", "sweep", "singular")


def build_parser() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--config", default=None, help="TOML run configuration (default preset when omitted)")
    parent.add_argument("--out", default=None, help="output directory")
    parent.add_argument("--seed", type=int, default=None, help="master seed override")
    parent.add_argument("--threads", type=int, default=None, help="worker threads (default HJB_EXEC_THREADS)")
    parent.add_argument("--log-level", default=None)

    parser = argparse.ArgumentParser(prog="hjb-exec", description="Optimal execution under stochastic liquidity")
    subparsers = parser.add_subparsers(dest="subcommand", required=True)
    analysis.register(subparsers, parent)
    experiments.register(subparsers, parent)
    return parser


def run(
    subcommand: str,
    config: RunConfig,
    out_dir: Union[str, Path, None],
    args: Optional[argparse.Namespace] = None,
) -> int:
    """
    Run one subcommand and write its files plus the manifest.

    Args:
        subcommand: One of SUBCOMMANDS
        config: Validated configuration
        out_dir: Output directory
        args: Parsed arguments carrying subcommand options

    Returns:
        Exit status: 0 success, 1 declared non-convergence
    """
    if subcommand not in SUBCOMMANDS:
        raise UsageError(f"Unknown subcommand {subcommand!r}")
    if args is None:
        args = build_parser().parse_args([subcommand])
    writer = ResultWriter(out_dir or config.output.directory)
    logger.info(f"Running {subcommand} into {writer.out_dir}")
    status = args.handler(args, config, writer)
    writer.write_manifest(config, subcommand, status)
    return status


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        config = load_config(args.config)
        if args.seed is not None:
            config = config.with_seed(args.seed)
        return run(args.subcommand, config, args.out, args)
    except HjbExecError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    except ValueError as e:
        logger.error(f"Invalid input: {e}")
        return 3


if __name__ == "__main__":
    sys.exit(main())
