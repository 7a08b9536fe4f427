"""CLI - batch front end: problem document in, result JSON and CSV tables out"""
import argparse
import logging
from typing import List, Optional

from src.connectors.problem_loader import COMMANDS, ProblemLoader, RunConfig
from src.exceptions import RatingForgeError
from src.utils.command_orchestrator import CommandOrchestrator

logger = logging.getLogger(__name__)

EXIT_OK = 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rating-forge",
                                     description="Optimal rating design: solve, classify, audit and verify")
    parser.add_argument("--config", required=True, help="problem document (JSON)")
    parser.add_argument("--out", default=None, help="output directory (default RATING_FORGE_RESULTS)")
    parser.add_argument("--command", choices=COMMANDS, default=None,
                        help="command to run; overrides run.command of the document")
    parser.add_argument("--grid-n", type=int, default=None, help="quality grid size of the menu oracle")
    parser.add_argument("--quiet", action="store_true", help="log warnings and errors only")
    return parser


def run(config: RunConfig) -> int:
    """Run one command; 0 on success, the error's exit code otherwise"""
    try:
        CommandOrchestrator(config).run()
    except RatingForgeError as e:
        logger.error(f"✗ {config.command} failed ({type(e).__name__}): {e}")
        return e.exit_code
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.quiet:
        logging.getLogger().setLevel(logging.WARNING)
    try:
        config = ProblemLoader().load(args.config, command=args.command, out_dir=args.out, grid_n=args.grid_n)
    except RatingForgeError as e:
        logger.error(f"✗ Invalid configuration ({type(e).__name__}): {e}")
        return e.exit_code
    return run(config)
