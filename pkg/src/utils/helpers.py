"""Helpers - JSON-safe conversion and the deterministic result writer"""
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict

import numpy as np

logger = logging.getLogger(__name__)


def format_duration(seconds: float) -> str:
    """
    Format duration in seconds to readable string
    Returns:
        "2m 5.3s" or "0.42s"
    """
    minutes = int(seconds // 60)
    secs = seconds - 60 * minutes
    if minutes:
        return f"{minutes}m {secs:.1f}s"
    return f"{secs:.2f}s"


def to_jsonable(value: Any) -> Any:
    """
    Plain JSON types from results

    numpy scalars and arrays become floats and lists, objects with to_dict
    are expanded, non-finite floats become the strings "inf", "-inf", "nan".
    """
    if callable(getattr(value, "to_dict", None)):
        return to_jsonable(value.to_dict())
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    if isinstance(value, Path):
        return str(value)
    return value


class ResultWriter:
    """Collects the sections of one command result and writes them as a single JSON file"""

    def __init__(self, results_dir):
        self.results_dir = Path(results_dir)
        self.all_results: Dict[str, Any] = {
            "summary": {},
            "details": {}
        }

    def add_result(self, key: str, data: Any, status: str = "ok"):
        """Add one section under details and its status under summary"""
        self.all_results["summary"][key] = status
        self.all_results["details"][key] = to_jsonable(data)

    def set_meta(self, **fields):
        self.all_results.setdefault("meta", {}).update(to_jsonable(fields))

    def dumps(self) -> str:
        return json.dumps(self.all_results, indent=2, sort_keys=True, ensure_ascii=False, allow_nan=False) + "\n"

    def save_all(self, name: str = "result") -> Path:
        """Write <results_dir>/<name>.json; identical results give identical bytes"""
        self.results_dir.mkdir(parents=True, exist_ok=True)
        filepath = self.results_dir / f"{name}.json"
        with open(filepath, "w", encoding="utf-8", newline="\n") as f:
            f.write(self.dumps())
        logger.info(f"Result saved: {filepath}")

        logger.info("=" * 60)
        logger.info("RESULT SUMMARY")
        logger.info("=" * 60)
        for key, status in self.all_results["summary"].items():
            logger.info(f"{key}: {status.upper()}")
        return filepath
