"""Command Orchestrator - runs one command in phases and writes its artifacts"""
import logging
import time
from pathlib import Path
from typing import Dict

from src.connectors.problem_loader import RunConfig
from src.processors.processor import CommandOutput, RatingProcessor
from src.utils.helpers import ResultWriter, format_duration
from src.utils.table_export import TableExporter

logger = logging.getLogger(__name__)


class CommandOrchestrator:
    """Orchestrates solve, write and summary phases of a command"""

    def __init__(self, config: RunConfig):
        self.config = config
        self.processor = RatingProcessor(config)
        self.output_dir = Path(config.out_dir) / config.command

    def execute_phase1_solve(self) -> CommandOutput:
        """Phase 1: run the command's solvers and checkers"""
        logger.info("=" * 60)
        logger.info(f"PHASE 1: RUNNING {self.config.command.upper()}")
        logger.info("=" * 60)
        start = time.perf_counter()
        output = self.processor.execute()
        logger.info(f"Solved in {format_duration(time.perf_counter() - start)}")
        return output

    def execute_phase2_write(self, output: CommandOutput) -> Dict[str, str]:
        """
        Phase 2: result JSON and CSV tables

        Returns:
            {"json": path, "<table>": path, ...}
        """
        logger.info("=" * 60)
        logger.info("PHASE 2: WRITING RESULTS")
        logger.info("=" * 60)
        writer = ResultWriter(self.output_dir)
        writer.set_meta(command=output.command, params=self.config.params, grid_n=self.config.grid_n)
        for key, value in output.sections.items():
            writer.add_result(key, value)
        for label, holds in output.checks:
            writer.all_results["summary"][f"check:{label}"] = "pass" if holds else "fail"
        paths = {"json": str(writer.save_all("result"))}

        exporter = TableExporter(self.output_dir)
        for name, frame in output.tables:
            paths[name] = str(exporter.write(frame, name))
        return paths

    def print_final_summary(self, output: CommandOutput):
        logger.info("=" * 60)
        logger.info("FINAL SUMMARY")
        logger.info("=" * 60)
        for label, holds in output.checks:
            if holds:
                logger.info(f"✓ {label}")
            else:
                logger.info(f"✗ {label}")

    def run(self) -> Dict[str, str]:
        output = self.execute_phase1_solve()
        paths = self.execute_phase2_write(output)
        self.print_final_summary(output)
        return paths
