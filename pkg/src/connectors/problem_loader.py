"""Problem Loader - strict JSON problem documents and CSV tables into solver inputs"""
import json
import logging
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from config.settings import cf
from src.core.costs import build_cost
from src.core.distributions import Support, build_distribution
from src.core.objectives import build_objective
from src.core.primitives import NumericOptions, ProblemSpec
from src.core.scheme import EXCLUSION, POOLING, SEGMENT_KINDS, DeterministicScheme, Segment
from src.exceptions import ConfigValidationError
from src.processors.stochastic import MONOPOLY, REGULATOR, Allocation

logger = logging.getLogger(__name__)

COMMANDS = (
    "solve-deterministic",
    "classify",
    "check-conditions",
    "oracle-compare",
    "stochastic-audit",
    "signaling",
    "fee-design",
)

# parameters each command accepts under run.params
COMMAND_PARAMS = {
    "solve-deterministic": ("theta0",),
    "classify": ("oracle_grid_n",),
    "check-conditions": ("theta0", "scheme_csv", "additive_cutoff"),
    "oracle-compare": ("grid_n", "quality", "cutoffs"),
    "stochastic-audit": ("allocation_csv", "U_bar", "fee_mode", "fee_alpha", "fee_thetas"),
    "signaling": ("theta_L", "additive"),
    "fee-design": ("rho",),
}

# parameters holding file paths, resolved against the document directory
PATH_PARAMS = ("scheme_csv", "allocation_csv")

TOP_LEVEL = ("support", "distribution", "cost", "objective", "numerics", "audit", "run")
FAMILY_SECTION = ("family", "params")


@dataclass
class RunConfig:
    """One CLI invocation: the parsed problem plus the command to run on it"""
    problem: ProblemSpec
    command: str
    params: Dict[str, Any] = field(default_factory=dict)
    out_dir: Path = field(default_factory=lambda: Path(cf.DIR_RESULTS))
    grid_n: Optional[int] = None
    source: Optional[Path] = None

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigValidationError(f"unknown command '{self.command}', expected one of {list(COMMANDS)}",
                                        field="command")
        unknown = set(self.params) - set(COMMAND_PARAMS[self.command])
        if unknown:
            raise ConfigValidationError(f"unknown fields {sorted(unknown)}", field=f"run.params({self.command})")
        if self.grid_n is not None and self.grid_n < 1:
            raise ConfigValidationError("must be a positive integer", field="grid_n")
        self._check_params()
        self.out_dir = Path(self.out_dir)
        for name in PATH_PARAMS:
            if name in self.params and not Path(self.params[name]).is_file():
                raise ConfigValidationError(f"file not found: {self.params[name]}", field=f"run.params.{name}")

    def _check_params(self):
        """Types and ranges of run.params, before any solver runs"""
        lo, hi = self.problem.theta_lo, self.problem.theta_hi
        p = self.params
        if "theta0" in p:
            _check_number(p, "theta0", 0.0, hi)
        if "theta_L" in p:
            _check_number(p, "theta_L", lo, hi)
        if "U_bar" in p:
            _check_number(p, "U_bar")
        if "rho" in p:
            _check_number(p, "rho", 0.0, 1.0, open_lo=True)
        if "fee_alpha" in p:
            _check_number(p, "fee_alpha", 0.0, None, open_lo=True)
        for name in ("oracle_grid_n", "grid_n"):
            if name in p and (isinstance(p[name], bool) or not isinstance(p[name], int) or p[name] < 1):
                raise ConfigValidationError("must be a positive integer", field=f"run.params.{name}")
        if "fee_mode" in p and p["fee_mode"] not in (MONOPOLY, REGULATOR):
            raise ConfigValidationError(f"expected '{MONOPOLY}' or '{REGULATOR}'", field="run.params.fee_mode")
        for name, bounds in (("quality", (0.0, None)), ("cutoffs", (0.0, hi)), ("fee_thetas", (lo, hi))):
            if name in p:
                if not isinstance(p[name], list) or not p[name]:
                    raise ConfigValidationError("must be a non-empty list", field=f"run.params.{name}")
                for k in range(len(p[name])):
                    _check_number(p[name], k, *bounds, open_lo=name == "quality", where=f"run.params.{name}")
        for name in ("additive", "additive_cutoff"):
            if name in p and not isinstance(p[name], bool):
                raise ConfigValidationError("must be true or false", field=f"run.params.{name}")


def _check_number(container, key, lo: Optional[float] = None, hi: Optional[float] = None, open_lo: bool = False,
                  where: Optional[str] = None) -> None:
    value = container[key]
    where = where or f"run.params.{key}"
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not np.isfinite(value):
        raise ConfigValidationError(f"{value!r} is not a finite number", field=where)
    below = lo is not None and (value <= lo if open_lo else value < lo)
    above = hi is not None and value > hi
    if below or above:
        left = "(" if open_lo else "["
        raise ConfigValidationError(f"{value!r} outside {left}{lo}, {hi}]", field=where)

def _to_float(value):
    """Decimals from the parser become floats; containers are converted recursively"""
    if isinstance(value, Decimal):
        return float(value)
    if isinstance(value, dict):
        return {k: _to_float(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_to_float(v) for v in value]
    return value


def _check_fields(section: Dict, allowed, where: str, required=()):
    if not isinstance(section, dict):
        raise ConfigValidationError("must be an object", field=where)
    unknown = set(section) - set(allowed)
    if unknown:
        raise ConfigValidationError(f"unknown fields {sorted(unknown)}", field=where)
    missing = [name for name in required if name not in section]
    if missing:
        raise ConfigValidationError(f"missing fields {missing}", field=where)


def _family(document: Dict, name: str):
    section = document[name]
    _check_fields(section, FAMILY_SECTION, name, required=("family",))
    params = section.get("params", {})
    _check_fields(params, params.keys(), f"{name}.params")
    return section["family"], params


class ProblemLoader:
    """
    Reads problem documents

    A document holds support, distribution, cost and objective sections,
    optional numerics overrides, an audit flag and an optional run section
    with a default command and its parameters. Numbers are parsed as exact
    decimals and handed to the solvers as floats.
    """

    def __init__(self, base_dir: Optional[Path] = None):
        self.base_dir = Path(base_dir) if base_dir else None

    @staticmethod
    def parse(text: str) -> Dict:
        try:
            raw = json.loads(text, parse_float=Decimal)
        except json.JSONDecodeError as e:
            raise ConfigValidationError(f"invalid JSON: {e}", field="config")
        if not isinstance(raw, dict):
            raise ConfigValidationError("document must be a JSON object", field="config")
        return _to_float(raw)

    def read(self, path) -> Dict:
        path = Path(path)
        if not path.is_file():
            raise ConfigValidationError(f"file not found: {path}", field="config")
        self.base_dir = path.parent
        with open(path, "r", encoding="utf-8") as f:
            return self.parse(f.read())

    def build_problem(self, document: Dict) -> ProblemSpec:
        _check_fields(document, TOP_LEVEL, "config", required=("support", "distribution", "cost", "objective"))
        support_section = document["support"]
        _check_fields(support_section, ("theta_lo", "theta_hi"), "support", required=("theta_lo", "theta_hi"))
        support = Support(float(support_section["theta_lo"]), float(support_section["theta_hi"]))
        numerics = NumericOptions.from_overrides(document.get("numerics", {}))

        family, params = _family(document, "distribution")
        dist = build_distribution(family, params, support)
        family, params = _family(document, "cost")
        cost = build_cost(family, params)
        family, params = _family(document, "objective")
        objective = build_objective(family, params, cost, zero_guard=numerics.zero_guard)

        audit = document.get("audit", True)
        if not isinstance(audit, bool):
            raise ConfigValidationError("must be true or false", field="audit")
        spec = ProblemSpec(support=support, dist=dist, cost=cost, objective=objective, numerics=numerics,
                           audit=audit)
        logger.info(f"Loaded problem: {dist.family} on [{support.theta_lo}, {support.theta_hi}], "
                    f"cost {cost.family}, objective {objective.family}")
        return spec

    def build_run(self, document: Dict, command: Optional[str] = None, out_dir=None,
                  grid_n: Optional[int] = None, source: Optional[Path] = None) -> RunConfig:
        """RunConfig from a document; explicit arguments override the document's run section"""
        run = document.get("run", {})
        _check_fields(run, ("command", "params"), "run")
        params = dict(run.get("params", {}))
        _check_fields(params, params.keys(), "run.params")
        for name in PATH_PARAMS:
            if name in params and self.base_dir is not None and not Path(params[name]).is_absolute():
                params[name] = str(self.base_dir / params[name])
        command = command or run.get("command")
        if not command:
            raise ConfigValidationError("no command given", field="command")
        problem = self.build_problem(document)
        return RunConfig(problem=problem, command=command, params=params,
                         out_dir=Path(out_dir) if out_dir else Path(cf.DIR_RESULTS), grid_n=grid_n, source=source)

    def load(self, path, command: Optional[str] = None, out_dir=None, grid_n: Optional[int] = None) -> RunConfig:
        document = self.read(path)
        return self.build_run(document, command=command, out_dir=out_dir, grid_n=grid_n, source=Path(path))


# ----------------------------------------------------------------------------
# CSV tables
# ----------------------------------------------------------------------------

def _read_table(path, columns: List[str], where: str) -> pd.DataFrame:
    path = Path(path)
    if not path.is_file():
        raise ConfigValidationError(f"file not found: {path}", field=where)
    frame = pd.read_csv(path, float_precision="round_trip")
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise ConfigValidationError(f"missing columns {missing}", field=where)
    if frame.empty:
        raise ConfigValidationError("table has no rows", field=where)
    return frame


def load_allocation_csv(path, U_bar: float = 0.0) -> Allocation:
    """Allocation from a (theta, q, w) table; extra columns such as D are ignored"""
    frame = _read_table(path, ["theta", "q", "w"], "allocation_csv")
    numeric = frame[["theta", "q", "w"]].apply(pd.to_numeric, errors="coerce")
    if numeric.isna().any().any():
        raise ConfigValidationError("non-numeric entries", field="allocation_csv")
    logger.info(f"Loaded allocation with {len(numeric)} rows from {path}")
    return Allocation(theta=numeric["theta"].to_numpy(), q=numeric["q"].to_numpy(), w=numeric["w"].to_numpy(),
                      U_bar=float(U_bar))


def load_scheme_csv(path) -> DeterministicScheme:
    """
    Scheme from a (theta, q, segment_kind) table

    Consecutive rows of one kind (and, for pools, one standard) form a
    segment that ends where the next one starts; the last row closes the
    scheme at the top type.
    """
    frame = _read_table(path, cf.SCHEME_COLUMNS, "scheme_csv")
    theta = pd.to_numeric(frame["theta"], errors="coerce").to_numpy(dtype=float)
    q = pd.to_numeric(frame["q"], errors="coerce").to_numpy(dtype=float)
    kinds = frame["segment_kind"].astype(str).str.strip().tolist()
    if np.isnan(theta).any() or np.isnan(q).any():
        raise ConfigValidationError("non-numeric entries", field="scheme_csv")
    bad = sorted(set(kinds) - set(SEGMENT_KINDS))
    if bad:
        raise ConfigValidationError(f"unknown segment kinds {bad}", field="scheme_csv.segment_kind")
    if np.any(np.diff(theta) < 0):
        raise ConfigValidationError("theta must be sorted", field="scheme_csv.theta")

    starts = [0]
    for i in range(1, len(kinds)):
        if kinds[i] != kinds[i - 1] or (kinds[i] == POOLING and q[i] != q[i - 1]):
            starts.append(i)
    segments = []
    for k, first in enumerate(starts):
        end = theta[starts[k + 1]] if k + 1 < len(starts) else theta[-1]
        kind = kinds[first]
        standard = float(q[first]) if kind == POOLING else None
        segments.append(Segment(float(theta[first]), float(end), kind, standard))
    cutoff = segments[0].end if segments[0].kind == EXCLUSION else None
    logger.info(f"Loaded scheme with {len(segments)} segment(s) from {path}")
    return DeterministicScheme(segments=tuple(segments), cutoff=cutoff)
