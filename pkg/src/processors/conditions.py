"""Conditions - numerical checkers for the optimality conditions, each with a signed margin"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from src.core.characteristic import (CharacteristicCtx, A_multiplier, R_of, R_table, make_context, r_of)
from src.core.primitives import ProblemSpec, q_full, q_full_array
from src.core.reports import ConditionReport
from src.core.scheme import IC_TOL, DeterministicScheme, Jump, ic_residuals, scheme_jumps, scheme_quality
from src.exceptions import MalformedScheme
from src.utils.numerics import build_grid, cumulative_cells, integrate, monotone_margin, refine_min

logger = logging.getLogger(__name__)

QUASI_DECREASING = "quasi-decreasing"
QUASI_INCREASING = "quasi-increasing"
QUASI_UNIMODAL = "quasi-unimodal"
# primary label precedence
LABEL_ORDER = (QUASI_DECREASING, QUASI_INCREASING, QUASI_UNIMODAL)


@dataclass
class QuasiClass:
    """Shape class of r: every satisfied label with its witness cutoff"""
    label: str
    witness: Optional[float]
    labels: List[str] = field(default_factory=list)
    witnesses: Dict[str, float] = field(default_factory=dict)
    sub_reports: List[ConditionReport] = field(default_factory=list)
    diagnostics: Dict = field(default_factory=dict)

    def to_dict(self) -> Dict:
        return {
            "label": self.label,
            "witness": self.witness,
            "labels": list(self.labels),
            "witnesses": dict(self.witnesses),
            "precedence": list(LABEL_ORDER),
            "sub_reports": [r.to_dict() for r in self.sub_reports],
            "diagnostics": self.diagnostics,
        }


# ----------------------------------------------------------------------------
# chord defects
# ----------------------------------------------------------------------------

def _worst(fn, grid: np.ndarray, values: np.ndarray, factor: int) -> Tuple[float, float]:
    """Grid minimum refined on a finer grid around the argmin"""
    k = int(np.argmin(values))
    refined, where = refine_min(fn, grid, k, factor)
    if refined < values[k]:
        return refined, where
    return float(values[k]), float(grid[k])


def _chord_part(id: str, fn, grid: np.ndarray, values: np.ndarray, tol: float, factor: int,
                cutoff: float) -> ConditionReport:
    if grid.size == 0:
        return ConditionReport.vacuous(id, witness=cutoff, note="empty", cutoff=cutoff)
    margin, witness = _worst(fn, grid, values, factor)
    return ConditionReport.from_margin(id, margin, witness, tol, cutoff=cutoff)


def check_S(ctx: CharacteristicCtx, grid_n: Optional[int] = None) -> ConditionReport:
    """
    Chord condition at the cutoff on [0, theta_L]

    margin = min(S1, S2, A - 2 tol): S1 covers (theta0, theta_L], S2 covers
    [0, theta0); an empty part contributes 0.
    """
    spec, opts = ctx.spec, ctx.spec.numerics
    n = grid_n or opts.condition_grid
    theta0, top = ctx.theta0, ctx.theta_L
    A = A_multiplier(ctx)
    extras = (theta0, spec.theta_lo, ctx.theta_c) + tuple(spec.dist.breakpoints)
    grid = build_grid(0.0, top, n, extras) if top > 0 else np.array([0.0])
    R = R_table(ctx, grid)
    k0 = int(np.argmin(np.abs(grid - theta0)))
    R0 = R_of(ctx, theta0)
    defect = R - R[k0] - A * (grid - theta0)

    def defect_at(t):
        return R_of(ctx, t) - R0 - A * (t - theta0)

    upper, lower = grid > theta0, grid < theta0
    s1 = _chord_part("S1", defect_at, grid[upper], defect[upper], opts.tol_cond, opts.refine_factor, theta0)
    s2 = _chord_part("S2", defect_at, grid[lower], defect[lower], opts.tol_cond, opts.refine_factor, theta0)
    strict = A - 2.0 * opts.tol_cond
    parts = [(s1.margin, s1.witness), (s2.margin, s2.witness), (strict, theta0)]
    margin, witness = min(parts, key=lambda p: p[0])
    report = ConditionReport.from_margin("S", margin, witness, opts.tol_cond, cutoff=theta0,
                                         sub_reports=[s1, s2],
                                         details={"A": A, "theta_c": ctx.theta_c, "theta_L": top})
    if A <= opts.tol_cond:
        report.note = "multiplier A is not positive"
    return report


def check_C(ctx: CharacteristicCtx, grid_n: Optional[int] = None, id: str = "C") -> ConditionReport:
    """r decreasing on the revealing region (theta_L, theta_hi]"""
    spec, opts = ctx.spec, ctx.spec.numerics
    start, stop = ctx.theta_L, spec.theta_hi
    if start >= stop:
        return ConditionReport.vacuous(id, witness=stop, cutoff=ctx.theta0)
    grid = build_grid(start, stop, grid_n or opts.condition_grid, spec.dist.breakpoints)
    margin, k = monotone_margin(r_of(ctx, grid), "decreasing")
    fine = np.linspace(grid[max(k - 1, 0)], grid[min(k + 2, grid.size - 1)], 2 * opts.refine_factor + 1)
    fine_margin, j = monotone_margin(r_of(ctx, fine), "decreasing")
    witness = grid[k]
    if fine_margin < margin:
        margin, witness = fine_margin, fine[j]
    return ConditionReport.from_margin(id, margin, witness, opts.tol_cond, cutoff=ctx.theta0)


def _labels_at(spec: ProblemSpec, ctx: CharacteristicCtx, s_report: ConditionReport,
               c_report: ConditionReport) -> List[str]:
    tol = spec.numerics.tol_cond
    labels = []
    if not s_report.holds:
        return labels
    if c_report.holds and ctx.theta0 <= spec.theta_lo + tol:
        labels.append(QUASI_DECREASING)
    if ctx.theta_c >= spec.theta_hi - tol:
        labels.append(QUASI_INCREASING)
    if c_report.holds:
        labels.append(QUASI_UNIMODAL)
    return labels


def _top_pool_cutoff(spec: ProblemSpec) -> float:
    """theta0 whose standard equals q_f(theta_hi), i.e. theta_c(theta0) = theta_hi"""
    q_top = q_full(spec, spec.theta_hi)
    return float(spec.cost.c(q_top)) / q_top if q_top > 0 else 0.0


def classify_quasi(spec: ProblemSpec, seeds: Optional[Sequence[float]] = None) -> QuasiClass:
    """
    Quasi-unimodal / quasi-increasing / quasi-decreasing label of r

    Candidate cutoffs: the optimal-cutoff roots, 0, theta_lo, the cutoff
    with theta_c = theta_hi and a bounded golden-section maximiser of the
    coarse S margin. An exhaustive scan runs only when none of them
    supports a label.
    """
    opts = spec.numerics
    if seeds is None:
        from src.processors.censorship_solver import solve_cutoff
        seeds = solve_cutoff(spec).maximizers

    def coarse_margin(t):
        return check_S(make_context(spec, t), grid_n=opts.classify_coarse_grid).margin

    golden = minimize_scalar(lambda t: -coarse_margin(t), bounds=(0.0, spec.theta_hi), method="bounded",
                             options={"xatol": 1e-6})
    candidates = sorted({float(np.clip(t, 0.0, spec.theta_hi)) for t in
                         [*seeds, 0.0, spec.theta_lo, _top_pool_cutoff(spec), float(golden.x)]})

    witnesses: Dict[str, float] = {}
    reports: List[ConditionReport] = []

    def evaluate(t):
        ctx = make_context(spec, t)
        s_report, c_report = check_S(ctx), check_C(ctx)
        reports.extend([s_report, c_report])
        for label in _labels_at(spec, ctx, s_report, c_report):
            witnesses.setdefault(label, t)

    for t in candidates:
        evaluate(t)
    scanned = False
    if not witnesses:
        scanned = True
        logger.info(f"No label at {len(candidates)} candidate cutoffs, scanning {opts.classify_scan} cutoffs")
        scan = np.linspace(0.0, spec.theta_hi, opts.classify_scan)
        margins = np.array([coarse_margin(t) for t in scan])
        for k in np.argsort(-margins)[:5]:
            if margins[k] < -10 * opts.tol_cond:
                break
            evaluate(float(scan[k]))

    labels = [label for label in LABEL_ORDER if label in witnesses]
    primary = labels[0] if labels else "none"
    result = QuasiClass(label=primary, witness=witnesses.get(primary), labels=labels, witnesses=witnesses,
                        sub_reports=reports,
                        diagnostics={"candidates": candidates, "exhaustive_scan": scanned})
    logger.info(f"Quasi class: {primary} (labels={labels})")
    return result


# ----------------------------------------------------------------------------
# multi-standard schemes
# ----------------------------------------------------------------------------

class _JumpCharacteristic:
    """r_j of the jump at theta_j, evaluated along the given scheme"""

    def __init__(self, spec: ProblemSpec, scheme: DeterministicScheme, theta_j: float):
        self.spec = spec
        self.scheme = scheme
        self.theta_j = theta_j
        self.kappa = spec.relative_concavity
        self.F_j = float(spec.dist.cdf(theta_j))
        self.kinks = tuple(sorted({theta_j, *scheme.boundaries, *spec.dist.breakpoints}))

    def r(self, theta):
        spec, objective = self.spec, self.spec.objective
        x = np.atleast_1d(np.asarray(theta, dtype=float))
        out = np.empty_like(x)
        below, above = x < spec.theta_lo, x > spec.theta_hi
        inside = ~(below | above)
        out[below] = self.kappa * self.F_j
        out[above] = -self.kappa * (1.0 - self.F_j)
        if np.any(inside):
            xi = x[inside]
            f = np.asarray(spec.dist.pdf(xi), dtype=float)
            drift = self.kappa * (np.asarray(spec.dist.cdf(xi), dtype=float) - self.F_j)
            if objective.is_linear_delegation:
                out[inside] = (objective.beta(xi) - objective.alpha * xi) * f - drift
            else:
                q = np.atleast_1d(scheme_quality(spec, self.scheme, xi))
                slope = objective.psi_q(q, xi) - self.kappa * (xi - spec.cost.c1(q))
                out[inside] = slope * f - drift
        return float(out[0]) if np.ndim(theta) == 0 else out

    def gain(self, theta: float) -> float:
        opts = self.spec.numerics
        return integrate(self.r, self.theta_j, theta, breakpoints=self.kinks, rel=opts.quad_rel,
                         abs_tol=opts.quad_abs, limit=opts.quad_limit)


def jump_multiplier(spec: ProblemSpec, scheme: DeterministicScheme, jump: Jump) -> float:
    """A_j: chord slope of the r_j gain from theta_j to c'(q_j)"""
    char = _JumpCharacteristic(spec, scheme, jump.theta)
    top = float(spec.cost.c1(jump.q_right))
    return char.gain(top) / (top - jump.theta)


def check_Sj_Cj(spec: ProblemSpec, scheme: DeterministicScheme) -> List[ConditionReport]:
    """
    Chord condition around every jump and r_j decreasing on every revealing
    interval; equality is enforced at interior ends c'(q_{j-1}), c'(q_j)
    """
    opts = spec.numerics
    residuals = ic_residuals(spec, scheme)
    worst = max(residuals, key=residuals.get)
    if residuals[worst] > IC_TOL:
        raise MalformedScheme(f"{worst} residual {residuals[worst]:.3e}", operation="check_Sj_Cj")
    jumps = scheme_jumps(spec, scheme)
    lo, hi = spec.theta_lo, spec.theta_hi
    reports: List[ConditionReport] = []

    for jump in jumps:
        char = _JumpCharacteristic(spec, scheme, jump.theta)
        start = float(spec.cost.c1(jump.q_left))
        top = float(spec.cost.c1(jump.q_right))
        A_j = jump_multiplier(spec, scheme, jump)
        stop = min(top, hi)
        grid = build_grid(start, stop, opts.condition_grid, (jump.theta, lo) + char.kinks)
        nodes = np.unique(np.concatenate([grid, [jump.theta]]))
        running = cumulative_cells(char.r, nodes)
        base = running[int(np.searchsorted(nodes, jump.theta))]
        values = running[np.searchsorted(nodes, grid)] - base - A_j * (grid - jump.theta)

        def defect_at(t, char=char, A_j=A_j):
            return char.gain(t) - A_j * (t - char.theta_j)

        margin, witness = _worst(defect_at, grid, values, opts.refine_factor)
        equality = {}
        for end in (start, top):
            if lo < end < hi:
                equality[end] = abs(defect_at(end))
                if -equality[end] < margin:
                    margin, witness = -equality[end], end
        reports.append(ConditionReport.from_margin(
            "S-j", margin, witness, opts.tol_cond, cutoff=jump.theta, segment=jump.index,
            details={"A_j": A_j, "interval": [start, stop], "standard": jump.q_right,
                     "equality_residuals": [[k, v] for k, v in sorted(equality.items())]}))

    for index, seg in scheme.reveal_segments():
        previous = [j for j in jumps if j.theta <= seg.start + IC_TOL]
        theta_j = previous[-1].theta if previous else lo
        char = _JumpCharacteristic(spec, scheme, theta_j)
        grid = build_grid(seg.start, seg.end, opts.condition_grid, spec.dist.breakpoints)
        margin, k = monotone_margin(char.r(grid), "decreasing")
        reports.append(ConditionReport.from_margin("C-j", margin, grid[k], opts.tol_cond, cutoff=theta_j,
                                                   segment=index))
    logger.debug(f"S-j/C-j: {sum(r.holds for r in reports)}/{len(reports)} hold")
    return reports


# ----------------------------------------------------------------------------
# stochastic-rating conditions
# ----------------------------------------------------------------------------

def N1_of(spec: ProblemSpec, thetas) -> np.ndarray:
    """(psi_qq/c'' + psi_qtheta) theta + psi_q (1 + theta f'/f) along q_f"""
    x = np.asarray(thetas, dtype=float)
    objective, cost = spec.objective, spec.cost
    q = q_full_array(spec, x)
    if objective.is_linear_delegation:
        curvature = -objective.alpha
    else:
        c2 = np.asarray(cost.c2(q), dtype=float)
        qq = np.asarray(objective.psi_qq(q, x), dtype=float)
        curvature = np.divide(qq, c2, out=np.zeros_like(x), where=c2 > 0)
    f = np.asarray(spec.dist.pdf(x), dtype=float)
    elasticity = x * np.asarray(spec.dist.pdf_prime(x), dtype=float) / f
    return (curvature + objective.psi_qtheta(q, x)) * x + objective.psi_q(q, x) * (1.0 + elasticity)


def check_N1(spec: ProblemSpec, interval: Tuple[float, float]) -> ConditionReport:
    """N1 decreasing on a fully revealing interval"""
    opts = spec.numerics
    a, b = interval
    grid = build_grid(a, b, opts.condition_grid, spec.dist.breakpoints)
    grid = grid[spec.dist.pdf(grid) > opts.zero_guard]
    if grid.size < 2:
        return ConditionReport.vacuous("N1", witness=a, details={"interval": [a, b]})
    margin, k = monotone_margin(N1_of(spec, grid), "decreasing")
    return ConditionReport.from_margin("N1", margin, grid[k], opts.tol_cond, details={"interval": [a, b]})


def N2_of(spec: ProblemSpec, thetas, theta_j: float, A: float, relaxed: bool = False) -> np.ndarray:
    x = np.asarray(thetas, dtype=float)
    kappa = spec.relative_concavity
    f = np.asarray(spec.dist.pdf(x), dtype=float)
    F = np.asarray(spec.dist.cdf(x), dtype=float)
    if relaxed:
        return kappa * x + kappa * F / f
    return A / f + kappa * x + kappa * (F - float(spec.dist.cdf(theta_j))) / f


def check_N2(spec: ProblemSpec, theta0: float, segment: Tuple[float, float], A: Optional[float] = None,
             relaxed: bool = False) -> ConditionReport:
    """
    N2 decreasing on the pooling region around the jump at theta0

    relaxed uses kappa theta + kappa F/f, valid for bunching without
    exclusion over the whole support.
    """
    opts = spec.numerics
    a, b = segment
    if A is None:
        A = A_multiplier(make_context(spec, theta0))
    grid = build_grid(a, b, opts.condition_grid, tuple(spec.dist.breakpoints) + (theta0,))
    grid = grid[spec.dist.pdf(grid) > opts.zero_guard]
    if grid.size < 2:
        return ConditionReport.vacuous("N2", witness=a, cutoff=theta0)
    margin, k = monotone_margin(N2_of(spec, grid, theta0, A, relaxed), "decreasing")
    return ConditionReport.from_margin("N2", margin, grid[k], opts.tol_cond, cutoff=theta0,
                                       note="footnote" if relaxed else "",
                                       details={"segment": [a, b], "A": A})


# ----------------------------------------------------------------------------
# comparison conditions and no exclusion
# ----------------------------------------------------------------------------

def check_AB(spec: ProblemSpec, theta0: float) -> Tuple[ConditionReport, ConditionReport]:
    """
    Truncated-problem conditions AB(i) and AB(ii) at theta0

    AB(i) margin is min (theta_L - theta)(G(theta0) - G(theta)) over
    (theta0, theta_L], on the same grid and refinement as S1, so the two
    margins coincide whenever theta_c <= theta_hi.
    """
    opts = spec.numerics
    ctx = make_context(spec, theta0)
    if not spec.objective.is_linear_delegation:
        logger.warning("check_AB on a non linear-delegation objective uses kappa in place of alpha")
    top = ctx.theta_L
    ab_ii = check_C(ctx, id="AB-ii")
    if top <= theta0:
        return ConditionReport.vacuous("AB-i", witness=theta0, cutoff=theta0), ab_ii

    mass = integrate(lambda t: float(spec.objective.psi_q(ctx.q0, t)) * spec.dist.pdf(t),
                     max(theta0, spec.theta_lo), top, breakpoints=ctx.breakpoints,
                     rel=opts.quad_rel, abs_tol=opts.quad_abs)
    A_ab = (mass - ctx.kappa * (top - ctx.theta_c) * (1.0 - ctx.F0)) / (top - theta0)
    extras = (theta0, spec.theta_lo, ctx.theta_c) + tuple(spec.dist.breakpoints)
    grid = build_grid(0.0, top, opts.condition_grid, extras) if top > 0 else np.array([0.0])
    R = R_table(ctx, grid)
    R_top = R_of(ctx, top)
    values = (top - grid) * A_ab - (R_top - R)

    def value_at(t):
        return (top - t) * A_ab - (R_top - R_of(ctx, t))

    upper = grid > theta0
    ab_i = _chord_part("AB-i", value_at, grid[upper], values[upper], opts.tol_cond, opts.refine_factor, theta0)
    s1 = check_S(ctx).sub("S1")
    A = A_multiplier(ctx)
    ab_i.details = {"A_AB": A_ab, "A": A, "implication_gap": bool(s1.holds and not ab_i.holds),
                    "S1_margin": s1.margin}
    if ab_i.details["implication_gap"]:
        ab_i.note = "S1 holds but AB(i) fails"
    return ab_i, ab_ii


def check_no_exclusion(spec: ProblemSpec) -> ConditionReport:
    """f decreasing and psi_qtheta <= -psi_qq/c'' everywhere, sufficient for theta0* <= theta_lo"""
    opts = spec.numerics
    grid = spec.support.grid(opts.condition_grid)
    density_margin, k = monotone_margin(spec.dist.pdf(grid), "decreasing")
    qs = np.linspace(opts.zero_guard, spec.q_max, opts.kappa_grid)
    ts = spec.support.grid(opts.kappa_grid)
    Q, T = np.meshgrid(qs, ts, indexing="ij")
    c2 = np.asarray(spec.cost.c2(Q), dtype=float)
    bound = np.divide(-np.asarray(spec.objective.psi_qq(Q, T), dtype=float), c2,
                      out=np.full_like(Q, np.inf), where=c2 > 0)
    slack = bound - np.asarray(spec.objective.psi_qtheta(Q, T), dtype=float)
    i, j = np.unravel_index(int(np.argmin(slack)), slack.shape)
    if slack[i, j] < density_margin:
        margin, witness = float(slack[i, j]), float(ts[j])
    else:
        margin, witness = density_margin, float(grid[k])
    return ConditionReport.from_margin("no-exclusion", margin, witness, opts.tol_cond,
                                       details={"density_margin": density_margin,
                                                "preference_margin": float(slack[i, j])})
