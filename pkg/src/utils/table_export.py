"""Table Export - plot-ready CSV tables of schemes, allocations, conditions and menus"""
import logging
from pathlib import Path
from typing import Iterable, List, Optional

import numpy as np
import pandas as pd

from config.settings import cf
from src.core.costs import CostFn
from src.core.primitives import ProblemSpec, q_full_array
from src.core.reports import ConditionReport
from src.core.scheme import EXCLUSION, POOLING, DeterministicScheme
from src.processors.menu_oracle import best_response

logger = logging.getLogger(__name__)

# full precision so that re-imported tables reproduce the floats exactly
FLOAT_FORMAT = "%.17g"


def scheme_frame(spec: ProblemSpec, scheme: DeterministicScheme, reveal_points: int = cf.REVEAL_POINTS) -> pd.DataFrame:
    """
    One row per segment start, reveal segments sampled on reveal_points types

    The top type closes the table so that every segment end is recoverable.
    """
    rows = []
    last = len(scheme.segments) - 1
    for i, seg in enumerate(scheme.segments):
        points = max(reveal_points, 2) if seg.kind not in (EXCLUSION, POOLING) else 2
        thetas = np.linspace(seg.start, seg.end, points)
        if i < last:
            thetas = thetas[:-1]
        if seg.kind == EXCLUSION:
            qs = np.zeros_like(thetas)
        elif seg.kind == POOLING:
            qs = np.full_like(thetas, seg.standard)
        else:
            qs = q_full_array(spec, thetas)
        rows.extend({"theta": float(t), "q": float(q), "segment_kind": seg.kind} for t, q in zip(thetas, qs))
    return pd.DataFrame(rows, columns=cf.SCHEME_COLUMNS)


def allocation_frame(theta, q, w, D) -> pd.DataFrame:
    return pd.DataFrame({"theta": theta, "q": q, "w": w, "D": D}, columns=cf.ALLOCATION_COLUMNS)


def conditions_frame(reports: Iterable[ConditionReport]) -> pd.DataFrame:
    """Reports flattened depth first; sub-reports keep their own ids"""
    rows: List[dict] = []

    def visit(report: ConditionReport):
        rows.append(report.to_row())
        for sub in report.sub_reports:
            visit(sub)

    for report in reports:
        visit(report)
    return pd.DataFrame(rows, columns=cf.CONDITION_COLUMNS)


def best_response_frame(cost: CostFn, levels, types) -> pd.DataFrame:
    rows = [{"theta": float(t), "q": best_response(cost, levels, float(t))} for t in types]
    return pd.DataFrame(rows, columns=cf.BEST_RESPONSE_COLUMNS)


class TableExporter:
    """Writes tables under one output directory"""

    def __init__(self, output_dir):
        self.output_dir = Path(output_dir)
        self.written: List[Path] = []

    def write(self, frame: pd.DataFrame, name: str, columns: Optional[List[str]] = None) -> Path:
        self.output_dir.mkdir(parents=True, exist_ok=True)
        path = self.output_dir / f"{name}.csv"
        frame.to_csv(path, index=False, columns=columns, float_format=FLOAT_FORMAT, lineterminator="\n")
        self.written.append(path)
        logger.info(f"Table saved: {path} ({len(frame)} rows)")
        return path

    def scheme(self, spec: ProblemSpec, scheme: DeterministicScheme, name: str = "scheme") -> Path:
        return self.write(scheme_frame(spec, scheme), name)

    def allocation(self, allocation, D, name: str = "allocation") -> Path:
        return self.write(allocation_frame(allocation.theta, allocation.q, allocation.w, D), name)

    def conditions(self, reports: Iterable[ConditionReport], name: str = "conditions") -> Path:
        return self.write(conditions_frame(reports), name)

    def best_response(self, cost: CostFn, levels, types, name: str = "best_response") -> Path:
        return self.write(best_response_frame(cost, levels, types), name)
