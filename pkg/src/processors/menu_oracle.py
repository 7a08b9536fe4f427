"""Menu Oracle - exact small-grid solvers over delegation menus (brute force and DP)"""
import logging
from dataclasses import dataclass, field
from threading import Lock
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed

from src.core.costs import CostFn
from src.core.primitives import ProblemSpec, q_full, q_indiff
from src.core.reports import ConditionReport
from src.core.scheme import (EXCLUSION, IC_TOL, POOLING, REVEAL, DeterministicScheme, Segment, ic_residuals,
                             scheme_payoff, validate_scheme)
from src.exceptions import ConfigValidationError, GridTooLargeError, MalformedScheme
from src.utils.numerics import expand_bracket, find_root, integrate

logger = logging.getLogger(__name__)

# relative tolerance of the best-response tie test
_TIE_EPS = 1e-12


@dataclass(frozen=True)
class Menu:
    """Delegation set: sorted distinct positive qualities, outside option 0 implicit"""
    levels: Tuple[float, ...] = ()

    def __post_init__(self):
        levels = tuple(float(q) for q in self.levels)
        object.__setattr__(self, "levels", levels)
        if any(q <= 0 for q in levels):
            raise ConfigValidationError("menu levels must be positive", field="menu")
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise ConfigValidationError("menu levels must be strictly increasing", field="menu")

    def __len__(self):
        return len(self.levels)

    def to_dict(self) -> Dict:
        return {"levels": list(self.levels)}


@dataclass(frozen=True)
class GridSpec:
    """Quality grid for the oracles; optional type grid for best-response tables"""
    quality: Tuple[float, ...]
    types: Tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "quality", tuple(float(q) for q in self.quality))
        object.__setattr__(self, "types", tuple(float(t) for t in self.types))
        for name, values in (("quality", self.quality), ("types", self.types)):
            if any(b <= a for a, b in zip(values, values[1:])):
                raise ConfigValidationError("grid must be strictly increasing", field=f"grid.{name}")
        if any(q <= 0 for q in self.quality):
            raise ConfigValidationError("quality grid must be positive", field="grid.quality")

    @property
    def n(self) -> int:
        return len(self.quality)


@dataclass
class MenuResult:
    """Best menu on a grid and its value; method is 'brute-force' or 'dp'"""
    menu: Menu
    value: float
    method: str
    grid: Tuple[float, ...] = ()
    diagnostics: Dict = field(default_factory=dict)

    def to_dict(self) -> Dict:
        return {"menu": list(self.menu.levels), "value": self.value, "method": self.method,
                "grid": list(self.grid), "diagnostics": self.diagnostics}


@dataclass
class Projection:
    """Scheme projected onto a finite menu"""
    menu: Menu
    menu_value: float
    scheme_value: float
    loss: float
    resolution: float

    def to_dict(self) -> Dict:
        return {"menu": list(self.menu.levels), "menu_value": self.menu_value,
                "scheme_value": self.scheme_value, "loss": self.loss, "resolution": self.resolution}


# ----------------------------------------------------------------------------
# agent side
# ----------------------------------------------------------------------------

def best_response(cost: CostFn, menu, theta: float) -> float:
    """argmax over menu and the outside option of theta q - c(q); ties go to the larger quality"""
    levels = menu.levels if isinstance(menu, Menu) else tuple(menu)
    options = np.concatenate([[0.0], np.asarray(levels, dtype=float)])
    utility = theta * options - np.asarray(cost.c(options), dtype=float)
    best = float(np.max(utility))
    chosen = np.nonzero(utility >= best - _TIE_EPS * max(1.0, abs(best)))[0]
    return float(options[chosen[-1]])


def threshold(cost: CostFn, q_a: float, q_b: float) -> float:
    """Indifference type between q_a < q_b; q_a = 0 gives the average cost c(q_b)/q_b"""
    return (float(cost.c(q_b)) - float(cost.c(q_a))) / (q_b - q_a)


def envelope(cost: CostFn, levels: Sequence[float]) -> Tuple[List[int], List[float]]:
    """
    Items of a menu chosen on a set of positive measure, with their entry types

    Stack pass over the sorted levels; an item is dropped when its entry
    type is not below the entry type of the next one. Returns indices into
    levels and the strictly increasing entry thresholds.
    """
    stack: List[int] = []
    entries: List[float] = []
    for k, q in enumerate(levels):
        while stack:
            t_new = threshold(cost, levels[stack[-1]], q)
            if entries[-1] >= t_new:
                stack.pop()
                entries.pop()
            else:
                break
        q_prev = levels[stack[-1]] if stack else 0.0
        stack.append(k)
        entries.append(threshold(cost, q_prev, q))
    return stack, entries


class _SegmentTable:
    """Integrals of psi(q_k, theta) f over clamped threshold intervals, shared by both oracles"""

    def __init__(self, spec: ProblemSpec, levels: Sequence[float]):
        self.spec = spec
        self.levels = list(levels)
        self._cache: Dict[Tuple[int, float, float], float] = {}
        self._lock = Lock()

    def clamp(self, t: float) -> float:
        return min(max(t, self.spec.theta_lo), self.spec.theta_hi)

    def value(self, k: int, a: float, b: float) -> float:
        a, b = self.clamp(a), self.clamp(b)
        if b <= a:
            return 0.0
        key = (k, a, b)
        cached = self._cache.get(key)
        if cached is not None:
            return cached
        spec, q = self.spec, self.levels[k]
        opts = spec.numerics
        result = integrate(lambda t: float(spec.objective.psi(q, t)) * spec.dist.pdf(t), a, b,
                           breakpoints=spec.dist.breakpoints, rel=opts.quad_rel, abs_tol=opts.quad_abs,
                           limit=opts.quad_limit)
        with self._lock:
            self._cache[key] = result
        return result

    def chain_value(self, chain: Sequence[int]) -> float:
        """Payoff of an envelope chain, summed in increasing item order"""
        total = 0.0
        cost = self.spec.cost
        for pos, k in enumerate(chain):
            q_prev = self.levels[chain[pos - 1]] if pos else 0.0
            start = threshold(cost, q_prev, self.levels[k])
            end = threshold(cost, self.levels[k], self.levels[chain[pos + 1]]) if pos + 1 < len(chain) \
                else np.inf
            total += self.value(k, start, end)
        return total


def menu_payoff(spec: ProblemSpec, menu: Menu, table: Optional[_SegmentTable] = None) -> float:
    """Principal value of a menu: psi integrated over each item's indifference interval"""
    levels = list(menu.levels)
    if not levels:
        return 0.0
    table = table or _SegmentTable(spec, levels)
    chain, _ = envelope(spec.cost, levels)
    return table.chain_value(chain)


# ----------------------------------------------------------------------------
# exhaustive and dynamic-programming oracles
# ----------------------------------------------------------------------------

def _better(value: float, items: Tuple[float, ...], best_value: float, best_items: Tuple[float, ...],
            tol: float) -> bool:
    """Higher value beyond the relative tie tolerance, then fewer items, then lexicographically smaller"""
    if abs(value - best_value) > tol * max(1.0, abs(value), abs(best_value)):
        return value > best_value
    if len(items) != len(best_items):
        return len(items) < len(best_items)
    return items < best_items


def _subset_block(table: _SegmentTable, n: int, start: int, stop: int) -> Tuple[float, Tuple[float, ...]]:
    cost, levels = table.spec.cost, table.levels
    tol = table.spec.numerics.tie_tol
    best_value, best_items = 0.0, ()
    for mask in range(start, stop):
        picked = [k for k in range(n) if mask >> k & 1]
        chain, _ = envelope(cost, [levels[k] for k in picked])
        value = table.chain_value([picked[k] for k in chain])
        items = tuple(levels[k] for k in picked)
        if _better(value, items, best_value, best_items, tol):
            best_value, best_items = value, items
    return best_value, best_items


def brute_force_menus(spec: ProblemSpec, grid: GridSpec, table: Optional[_SegmentTable] = None) -> MenuResult:
    """Every subset of the grid; blocks of masks run on the worker threads"""
    opts = spec.numerics
    n = grid.n
    if n > opts.bruteforce_max:
        raise GridTooLargeError(f"{n} levels exceed the enumeration cap {opts.bruteforce_max}",
                                operation="brute_force_menus")
    table = table or _SegmentTable(spec, grid.quality)
    total = 1 << n
    blocks = max(1, min(opts.threads * 4, total))
    bounds = np.linspace(0, total, blocks + 1).astype(int)
    results = Parallel(n_jobs=opts.threads, prefer="threads")(
        delayed(_subset_block)(table, n, int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a)
    best_value, best_items = 0.0, ()
    for value, items in results:
        if _better(value, items, best_value, best_items, opts.tie_tol):
            best_value, best_items = value, items
    logger.info(f"Brute force over {total} menus: value={best_value:.10g}, |menu|={len(best_items)}")
    return MenuResult(menu=Menu(best_items), value=best_value, method="brute-force", grid=grid.quality,
                      diagnostics={"subsets": total})


def dp_optimal_menu(spec: ProblemSpec, grid: GridSpec, table: Optional[_SegmentTable] = None) -> MenuResult:
    """
    Best menu by dynamic programming over (second-to-last, last) item pairs

    State (i, k) holds the best chain whose last two items are i < k
    (i = -1 for the outside option); its value counts every item before k.
    Moving to j > k needs t(i, k) < t(k, j) and charges k on [t(i,k), t(k,j)).
    """
    cost, tol = spec.cost, spec.numerics.tie_tol
    levels = list(grid.quality)
    n = len(levels)
    table = table or _SegmentTable(spec, levels)

    def t(i, k):
        return threshold(cost, levels[i] if i >= 0 else 0.0, levels[k])

    # state -> (prefix value, chain)
    states: Dict[Tuple[int, int], Tuple[float, Tuple[int, ...]]] = {(-1, k): (0.0, (k,)) for k in range(n)}
    for k in range(n):
        for i in range(-1, k):
            if (i, k) not in states:
                continue
            value, chain = states[(i, k)]
            entry = t(i, k)
            for j in range(k + 1, n):
                exit_ = t(k, j)
                if exit_ <= entry:
                    continue
                candidate = (value + table.value(k, entry, exit_), chain + (j,))
                incumbent = states.get((k, j))
                if incumbent is None or _better(candidate[0], tuple(levels[x] for x in candidate[1]),
                                                incumbent[0], tuple(levels[x] for x in incumbent[1]), tol):
                    states[(k, j)] = candidate

    best_value, best_items = 0.0, ()
    for (i, k), (value, chain) in sorted(states.items()):
        total = value + table.value(k, t(i, k), np.inf)
        items = tuple(levels[x] for x in chain)
        if _better(total, items, best_value, best_items, tol):
            best_value, best_items = total, items
    logger.info(f"DP over {n} levels: value={best_value:.10g}, |menu|={len(best_items)}")
    return MenuResult(menu=Menu(best_items), value=best_value, method="dp", grid=grid.quality,
                      diagnostics={"states": len(states)})


def compare_oracles(spec: ProblemSpec, grid: GridSpec) -> Dict:
    """Brute force and DP on one shared segment table"""
    table = _SegmentTable(spec, grid.quality)
    brute = brute_force_menus(spec, grid, table)
    dp = dp_optimal_menu(spec, grid, table)
    tol = spec.numerics.tie_tol * max(1.0, abs(brute.value))
    agree = brute.menu == dp.menu and abs(brute.value - dp.value) <= tol
    if agree:
        logger.info(f"✓ Oracles agree: {dp.value:.10g}")
    else:
        logger.warning(f"✗ Oracles disagree: brute={brute.value!r} dp={dp.value!r}")
    return {"brute": brute.to_dict(), "dp": dp.to_dict(), "dp_value": dp.value, "brute_value": brute.value,
            "agree": agree}


# ----------------------------------------------------------------------------
# grids, schemes and audits
# ----------------------------------------------------------------------------

def anchored_quality_grid(spec: ProblemSpec, n: int, cutoffs: Sequence[float] = ()) -> GridSpec:
    """Geometric quality grid with q_f(theta_hi) and q_i of every candidate cutoff kept exactly"""
    if n < 1:
        raise ConfigValidationError("grid size must be positive", field="grid_n")
    top = q_full(spec, spec.theta_hi)
    anchors = {top}
    for cutoff in cutoffs:
        q = q_indiff(spec, float(cutoff))
        if 0 < q <= spec.q_max:
            anchors.add(q)
    anchors = sorted(anchors)[:n]
    free = n - len(anchors)
    bottom = max(q_full(spec, spec.theta_lo), 1e-3 * top)
    base = np.geomspace(bottom, top, free + 1)[:-1] if free else np.zeros(0)
    gap = 1e-9 * top
    levels = list(anchors) + [float(q) for q in base if min(abs(q - a) for a in anchors) > gap]
    return GridSpec(quality=tuple(sorted(levels)), types=tuple(spec.support.grid(201)))


def classification_grid(spec: ProblemSpec, n: int, cutoffs: Sequence[float] = ()) -> GridSpec:
    """
    Quality grid for regime classification

    The anchored grid, plus q_f and q_i at every density breakpoint and n
    evenly spaced levels up to q_f(theta_hi). Pool standards of piecewise
    densities sit on q_i of an entry breakpoint or q_f of an exit one.
    """
    base = anchored_quality_grid(spec, n, cutoffs)
    top = q_full(spec, spec.theta_hi)
    levels = set(base.quality)
    for t in spec.dist.breakpoints:
        if spec.theta_lo < t < spec.theta_hi:
            for q in (q_full(spec, float(t)), q_indiff(spec, float(t))):
                if 0 < q <= spec.q_max:
                    levels.add(float(q))
    levels.update(float(q) for q in np.linspace(top / n, top, n))
    kept: List[float] = []
    for q in sorted(levels):
        if not kept or q - kept[-1] > 1e-9 * top:
            kept.append(q)
    return GridSpec(quality=tuple(kept), types=base.types)


def scheme_from_menu(spec: ProblemSpec, menu: Menu) -> DeterministicScheme:
    """Exclusion below the first entry type, then one pool per envelope item"""
    lo, hi = spec.theta_lo, spec.theta_hi
    levels = list(menu.levels)
    if not levels:
        return DeterministicScheme(segments=(Segment(lo, hi, EXCLUSION),))
    chain, entries = envelope(spec.cost, levels)
    exits = entries[1:] + [np.inf]
    segments: List[Segment] = []
    first_entry = min(max(entries[0], lo), hi)
    if first_entry > lo:
        segments.append(Segment(lo, first_entry, EXCLUSION))
    for k, a, b in zip(chain, entries, exits):
        a, b = min(max(a, lo), hi), min(max(b, lo), hi)
        if b > a:
            segments.append(Segment(a, b, POOLING, levels[k]))
    return DeterministicScheme(segments=tuple(segments), cutoff=entries[0])


def project_scheme(spec: ProblemSpec, scheme: DeterministicScheme, reveal_levels: int = 8) -> Projection:
    """Pool standards plus q_f on reveal_levels types per revealing segment, as a menu"""
    validate_scheme(spec, scheme)
    levels = set(scheme.standards)
    for _, seg in scheme.reveal_segments():
        for t in np.linspace(seg.start, seg.end, max(reveal_levels, 2)):
            q = q_full(spec, float(t))
            if q > 0:
                levels.add(q)
    ordered = sorted(levels)
    menu = Menu(tuple(ordered))
    menu_value = menu_payoff(spec, menu)
    scheme_value = scheme_payoff(spec, scheme)
    resolution = float(np.max(np.diff(ordered))) if len(ordered) > 1 else 0.0
    return Projection(menu=menu, menu_value=menu_value, scheme_value=scheme_value,
                      loss=scheme_value - menu_value, resolution=resolution)


def ic_audit(spec: ProblemSpec, scheme: DeterministicScheme) -> ConditionReport:
    """IC structure of a scheme as one report with a sub-report per condition"""
    try:
        validate_scheme(spec, scheme)
    except MalformedScheme as e:
        return ConditionReport(id="IC", holds=False, margin=-np.inf, witness=None, note=str(e))
    segs = scheme.segments
    alternation = 0.0
    witness = None
    for a, b in zip(segs, segs[1:]):
        if a.kind == b.kind == REVEAL or (a.kind == b.kind == POOLING and a.standard == b.standard):
            alternation, witness = 1.0, b.start
            break
    subs = [ConditionReport.from_margin("IC-alternation", -alternation, witness, IC_TOL)]
    residuals = ic_residuals(spec, scheme)
    for name, value in residuals.items():
        subs.append(ConditionReport.from_margin(f"IC-{name.replace('_', '-')}", -value, None, IC_TOL))
    worst = min(subs, key=lambda r: r.margin)
    return ConditionReport.from_margin("IC", worst.margin, worst.witness, IC_TOL, sub_reports=subs,
                                       details={"residuals": residuals})


def additive_cost_constants(cost: CostFn, tol: float = 1e-12) -> Tuple[float, float]:
    """(e_f, e_i) of an additive cost c(q - theta): c'(e_f) = 1 and c(e_i) = e_i"""
    slope = lambda e: float(cost.c1(e)) - 1.0
    e_f = find_root(slope, 0.0, expand_bracket(slope, 0.0, 1.0, operation="additive_cost_constants"),
                    tol=tol, operation="additive_cost_constants")
    gap = lambda e: float(cost.c(e)) - e
    e_i = find_root(gap, e_f, expand_bracket(gap, e_f, max(e_f, 1.0), operation="additive_cost_constants"),
                    tol=tol, operation="additive_cost_constants")
    return e_f, e_i


def additive_cutoff_check(spec: ProblemSpec, theta0: float) -> ConditionReport:
    """Cutoff inequality F(theta0 + 1) - F(theta0 - 1) <= 2 f(theta0) of the quadratic additive cost"""
    dist = spec.dist
    window = float(dist.cdf(theta0 + 1.0)) - float(dist.cdf(theta0 - 1.0))
    density = float(dist.pdf(theta0))
    return ConditionReport.from_margin("additive-cutoff", 2.0 * density - window, theta0, spec.numerics.tol_cond,
                                       cutoff=theta0, details={"window_mass": window, "density": density})
