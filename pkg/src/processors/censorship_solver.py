"""Censorship Solver - optimal cutoff, lower-censorship scheme and regime classification"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from src.core.characteristic import A_multiplier, make_context
from src.core.primitives import ProblemSpec, q_full_array, q_indiff, theta_L
from src.core.reports import ConditionReport
from src.core.scheme import (EXCLUSION, POOLING, REVEAL, DeterministicScheme, Segment, scheme_payoff,
                             scheme_quality)
from src.exceptions import NoRootError
from src.processors.conditions import check_C, check_no_exclusion, check_S
from src.utils.numerics import centered_difference, find_root, integrate

logger = logging.getLogger(__name__)

__all__ = [
    "CutoffSolution", "SolveResult", "DeterministicScheme", "Segment", "V_of", "V_prime", "solve_cutoff",
    "build_scheme", "scheme_payoff", "scheme_quality", "classify_regime", "regime_of",
]

FULLY_REVEALING = "fully-revealing"
PASS_FAIL = "pass-fail"
LOWER_CENSORSHIP = "lower-censorship"
NO_EXCLUSION = "lower-censorship-no-exclusion"
MULTI_STANDARD = "multi-standard"

# default quality grid size of the menu oracle when conditions fail
ORACLE_GRID = 12


@dataclass
class CutoffSolution:
    """
    Optimal cutoff with its KKT status

    status is "boundary" (theta0 = 0, V'(0) <= 0), "interior-root" or
    "plateau" when V' vanishes on an interval. maximizing_set lists the
    maximising cutoffs as [a, b] intervals (a == b for isolated roots).
    """
    theta0: float
    value: float
    V_prime: float
    status: str
    maximizers: List[float] = field(default_factory=list)
    maximizing_set: List[List[float]] = field(default_factory=list)
    candidates: int = 0

    def to_dict(self) -> Dict:
        return {
            "theta0": self.theta0,
            "value": self.value,
            "V_prime": self.V_prime,
            "status": self.status,
            "maximizers": list(self.maximizers),
            "maximizing_set": [list(p) for p in self.maximizing_set],
            "candidates": self.candidates,
        }


@dataclass
class SolveResult:
    """Optimal deterministic scheme with its regime, value and condition reports"""
    scheme: DeterministicScheme
    cutoff: float
    regime: str
    value: float
    reports: List[ConditionReport] = field(default_factory=list)
    oracle_agreement: Optional[bool] = None
    sufficiency_only: bool = False
    solution: Optional[CutoffSolution] = None
    ties: List[Dict] = field(default_factory=list)
    oracle: Dict = field(default_factory=dict)

    def report(self, id: str) -> Optional[ConditionReport]:
        return next((r for r in self.reports if r.id == id), None)

    def to_dict(self) -> Dict:
        return {
            "regime": self.regime,
            "cutoff": self.cutoff,
            "value": self.value,
            "scheme": self.scheme.to_dict(),
            "reports": [r.to_dict() for r in self.reports],
            "oracle_agreement": self.oracle_agreement,
            "sufficiency_only": self.sufficiency_only,
            "cutoff_solution": self.solution.to_dict() if self.solution else None,
            "ties": self.ties,
            "oracle": self.oracle,
        }


# ----------------------------------------------------------------------------
# value of a cutoff
# ----------------------------------------------------------------------------

def V_of(spec: ProblemSpec, theta0: float) -> float:
    """Principal value of the lower-censorship scheme with cutoff theta0"""
    theta0 = float(theta0)
    if not 0.0 <= theta0 <= spec.theta_hi:
        raise ValueError(f"cutoff {theta0} outside [0, {spec.theta_hi}]")
    objective, dist, opts = spec.objective, spec.dist, spec.numerics
    q0 = q_indiff(spec, theta0)
    top = theta_L(spec, theta0)
    bottom = max(theta0, spec.theta_lo)
    kw = dict(breakpoints=dist.breakpoints, rel=opts.quad_rel, abs_tol=opts.quad_abs, limit=opts.quad_limit)
    pooled = 0.0
    if top > bottom and q0 > 0:
        pooled = integrate(lambda t: float(objective.psi(q0, t)) * dist.pdf(t), bottom, top, **kw)
    revealed = 0.0
    if top < spec.theta_hi:
        revealed = integrate(lambda t: float(objective.psi(float(q_full_array(spec, t)), t)) * dist.pdf(t),
                             top, spec.theta_hi, **kw)
    return pooled + revealed


def V_prime(spec: ProblemSpec, theta0: float) -> float:
    """V'(theta0) = A q_i(theta0) - psi(q_i(theta0), theta0) f(theta0)"""
    theta0 = float(theta0)
    if theta0 <= 0.0:
        return 0.0
    ctx = make_context(spec, theta0)
    value = A_multiplier(ctx) * ctx.q0 - float(spec.objective.psi(ctx.q0, theta0)) * float(spec.dist.pdf(theta0))
    opts = spec.numerics
    if opts.debug and opts.fd_step < theta0 < spec.theta_hi - opts.fd_step:
        numeric = centered_difference(lambda t: V_of(spec, t), theta0, opts.fd_step)
        if abs(numeric - value) > 1e-5 * max(1.0, abs(value)):
            logger.warning(f"V' closed form {value:.10g} differs from finite difference {numeric:.10g} "
                           f"at theta0={theta0:.6g}")
    return value


def _group(points: List[float], spacing: float) -> List[List[float]]:
    """Consecutive points closer than spacing merged into [a, b] intervals"""
    groups: List[List[float]] = []
    for p in sorted(points):
        if groups and p - groups[-1][1] <= spacing:
            groups[-1][1] = p
        else:
            groups.append([p, p])
    return groups


def _plateau_edge(spec: ProblemSpec, a: float, b: float, tol: float, xtol: float) -> float:
    """First cutoff past a flat run of V', from the falling side"""
    while b - a > xtol:
        mid = 0.5 * (a + b)
        if abs(V_prime(spec, mid)) <= tol:
            a = mid
        else:
            b = mid
    return b


def solve_cutoff(spec: ProblemSpec) -> CutoffSolution:
    """
    Cutoff maximising V over [0, theta_hi]

    Scan V' on cutoff_scan points, polish every +/- crossing by bisection,
    keep plateau points where |V'| <= tol_cond and the boundary 0, then pick
    the best V; near ties within tie_tol go to the smallest cutoff.
    """
    opts = spec.numerics
    hi = spec.theta_hi
    scan = np.unique(np.concatenate([np.linspace(0.0, hi, opts.cutoff_scan),
                                     [spec.theta_lo] if spec.theta_lo > 0 else []]))
    slopes = np.array([V_prime(spec, t) for t in scan])
    tol = opts.tol_cond
    if np.all(slopes[1:] > tol):
        raise NoRootError(f"V' > 0 on (0, {hi}]", operation="solve_cutoff")

    candidates = {0.0}
    plateau = [float(t) for t, s in zip(scan[1:], slopes[1:]) if abs(s) <= tol]
    candidates.update(plateau)
    for k in range(1, len(scan) - 1):
        if abs(slopes[k]) <= tol and slopes[k + 1] < -tol:
            candidates.add(_plateau_edge(spec, float(scan[k]), float(scan[k + 1]), tol, opts.tol_root))
    for k in range(len(scan) - 1):
        if slopes[k] > tol and slopes[k + 1] < -tol:
            root = find_root(lambda t: V_prime(spec, t), float(scan[k]), float(scan[k + 1]),
                             tol=opts.tol_root, operation="solve_cutoff")
            candidates.add(float(root))
    if slopes[-1] > tol:
        candidates.add(float(hi))

    values = {t: V_of(spec, t) for t in sorted(candidates)}
    best = max(values.values())
    slack = opts.tie_tol * max(1.0, abs(best))
    maximizers = [t for t, v in values.items() if v >= best - slack]
    theta0 = min(maximizers)
    spacing = 1.5 * float(np.max(np.diff(scan))) if scan.size > 1 else 0.0
    maximizing_set = _group(maximizers, spacing)
    if theta0 == 0.0:
        status = "boundary"
    elif any(abs(theta0 - p) == 0.0 for p in plateau) and len(maximizers) > 1:
        status = "plateau"
    else:
        status = "interior-root"
    solution = CutoffSolution(theta0=theta0, value=values[theta0], V_prime=V_prime(spec, theta0), status=status,
                              maximizers=[t for group in maximizing_set for t in sorted(set(group))],
                              maximizing_set=maximizing_set, candidates=len(candidates))
    logger.info(f"Optimal cutoff theta0={theta0:.10g} ({status}), V={solution.value:.10g}, "
                f"{len(maximizers)} maximizer(s)")
    return solution


# ----------------------------------------------------------------------------
# scheme and regime
# ----------------------------------------------------------------------------

def build_scheme(spec: ProblemSpec, theta0: float) -> DeterministicScheme:
    """Exclusion [theta_lo, theta0), pool at q_i(theta0) up to theta_L, reveal above; empty pieces dropped"""
    theta0 = float(theta0)
    lo, hi = spec.theta_lo, spec.theta_hi
    q0 = q_indiff(spec, theta0)
    top = theta_L(spec, theta0)
    bottom = min(max(theta0, lo), hi)
    segments: List[Segment] = []
    if bottom > lo:
        segments.append(Segment(lo, bottom, EXCLUSION))
    if top > bottom and q0 > 0:
        segments.append(Segment(bottom, top, POOLING, q0))
    if top < hi:
        segments.append(Segment(max(top, bottom), hi, REVEAL))
    return DeterministicScheme(segments=tuple(segments), cutoff=theta0)


def regime_of(spec: ProblemSpec, scheme: DeterministicScheme) -> str:
    """Regime label read off the shape of a lower-censorship scheme"""
    kinds = scheme.kinds
    if kinds == [REVEAL]:
        return FULLY_REVEALING
    if POOLING in kinds and REVEAL not in kinds:
        return PASS_FAIL
    if EXCLUSION not in kinds:
        return NO_EXCLUSION
    return LOWER_CENSORSHIP


def _oracle_run(spec: ProblemSpec, cutoffs: List[float], n: int):
    from src.processors.menu_oracle import classification_grid, dp_optimal_menu

    grid = classification_grid(spec, n, cutoffs)
    return grid, dp_optimal_menu(spec, grid)


def classify_regime(spec: ProblemSpec, oracle_grid_n: Optional[int] = None) -> SolveResult:
    """
    Optimal deterministic regime

    Linear delegation: S and C at the optimal cutoff are necessary and
    sufficient, so a failure means more than one standard; the DP menu on
    the classification grid replaces the lower-censorship scheme when it
    scores higher. Other objectives: the conditions are sufficient only.
    """
    from src.processors.menu_oracle import scheme_from_menu

    solution = solve_cutoff(spec)
    theta0 = solution.theta0
    scheme = build_scheme(spec, theta0)
    ctx = make_context(spec, theta0)
    s_report, c_report = check_S(ctx), check_C(ctx)
    reports = [s_report, c_report]
    linear = spec.objective.is_linear_delegation
    result = SolveResult(scheme=scheme, cutoff=theta0, regime=regime_of(spec, scheme),
                         value=scheme_payoff(spec, scheme), reports=reports, solution=solution,
                         sufficiency_only=not linear)
    if theta0 <= spec.theta_lo:
        reports.append(check_no_exclusion(spec))

    for group in solution.maximizing_set:
        for t in sorted(set(group)):
            if t == theta0:
                continue
            label = regime_of(spec, build_scheme(spec, t))
            if label != result.regime and all(tie["regime"] != label for tie in result.ties):
                result.ties.append({"cutoff": t, "regime": label})
    if result.ties:
        labels = sorted({result.regime, *(tie["regime"] for tie in result.ties)})
        logger.info(f"Payoff tie across regimes {labels}")

    holds = s_report.holds and c_report.holds
    if linear and not holds:
        n = oracle_grid_n or ORACLE_GRID
        grid, best = _oracle_run(spec, solution.maximizers, n)
        result.oracle = {"grid": list(grid.quality), "menu": list(best.menu.levels), "dp_value": best.value}
        candidate = scheme_from_menu(spec, best.menu)
        candidate_value = scheme_payoff(spec, candidate)
        slack = spec.numerics.tie_tol * max(1.0, abs(result.value))
        if candidate_value > result.value + slack:
            result.scheme, result.value = candidate, candidate_value
            result.regime = MULTI_STANDARD if len(candidate.standards) > 1 else regime_of(spec, candidate)
            logger.info(f"Conditions fail at theta0={theta0:.6g}: DP menu {list(best.menu.levels)}")
        else:
            logger.info(f"Conditions fail at theta0={theta0:.6g}; DP menu does not beat lower censorship")
        result.oracle_agreement = bool(result.value >= best.value - 1e-6)
    elif oracle_grid_n:
        grid, best = _oracle_run(spec, solution.maximizers, oracle_grid_n)
        result.oracle = {"grid": list(grid.quality), "menu": list(best.menu.levels), "dp_value": best.value}
        result.oracle_agreement = bool(result.value >= best.value - 1e-6)
    if not holds and not linear:
        logger.info("Conditions fail in general mode; lower censorship kept as a candidate only")

    status = "✓" if holds else "✗"
    logger.info(f"{status} Regime: {result.regime} (theta0={theta0:.6g}, value={result.value:.10g})")
    return result


def cutoff_report(spec: ProblemSpec, theta0: float) -> Tuple[ConditionReport, ConditionReport]:
    """S and C at an arbitrary cutoff"""
    ctx = make_context(spec, theta0)
    return check_S(ctx), check_C(ctx)
