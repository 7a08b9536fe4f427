"""Stochastic - feasibility of (q, w) pairs, envelope wages, noisy tests and improvability scans"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Union

import numpy as np
from scipy.integrate import cumulative_simpson, cumulative_trapezoid

from src.core.characteristic import A_multiplier, make_context
from src.core.distributions import Distribution
from src.core.primitives import ProblemSpec, q_full
from src.core.reports import ConditionReport
from src.core.scheme import EXCLUSION, DeterministicScheme, scheme_jumps, scheme_quality
from src.exceptions import ConfigValidationError, DivergenceError, PreconditionViolated
from src.processors.conditions import check_N1, check_N2, jump_multiplier
from src.utils.numerics import build_grid, find_root, integrate

logger = logging.getLogger(__name__)

# D(theta) below this is an MPS violation
MPS_TOL = 1e-8

MONOPOLY = "monopoly"
REGULATOR = "regulator"

QualityPath = Union[Callable[[np.ndarray], np.ndarray], np.ndarray]


@dataclass
class Allocation:
    """
    Direct mechanism sampled on a type grid

    U_bar is theta_lo times the lowest type's rent, the constant in
    theta w - c(q) = int w + U_bar.
    """
    theta: np.ndarray
    q: np.ndarray
    w: np.ndarray
    U_bar: float = 0.0

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        self.q = np.asarray(self.q, dtype=float)
        self.w = np.asarray(self.w, dtype=float)
        if not (self.theta.shape == self.q.shape == self.w.shape) or self.theta.ndim != 1 or self.theta.size < 2:
            raise ConfigValidationError("theta, q and w must be 1-d arrays of equal length >= 2", field="allocation")
        if np.any(np.diff(self.theta) <= 0):
            raise ConfigValidationError("theta must be strictly increasing", field="allocation.theta")
        if np.any(np.diff(self.q) < -1e-12):
            raise ConfigValidationError("q must be increasing", field="allocation.q")
        if np.any(np.diff(self.w) < -1e-9):
            logger.warning("Allocation wage is not increasing; IC fails")

    def to_dict(self) -> Dict:
        return {"points": int(self.theta.size), "theta_range": [float(self.theta[0]), float(self.theta[-1])],
                "U_bar": self.U_bar}


@dataclass
class FeasibilityReport:
    """MPS via the D curve, BP via its end value"""
    mps_holds: bool
    bp_residual: float
    first_violation_theta: Optional[float]
    D: np.ndarray
    min_margin: float
    bp_holds: bool
    bp_decides: bool

    @property
    def feasible(self) -> bool:
        return self.bp_holds and (self.mps_holds or self.bp_decides)

    def to_dict(self) -> Dict:
        return {
            "feasible": self.feasible,
            "mps_holds": self.mps_holds,
            "bp_holds": self.bp_holds,
            "bp_residual": self.bp_residual,
            "bp_decides": self.bp_decides,
            "min_margin": self.min_margin,
            "first_violation_theta": self.first_violation_theta,
        }


@dataclass
class NoisyTest:
    """Disclosure schedule p(q): reveal q w.p. 1 - p(q), else the pooled 'pass' signal"""
    quality: np.ndarray
    p: np.ndarray
    fixed_point: float
    pass_mean: float
    consistency: float
    clipped: int = 0

    def to_dict(self) -> Dict:
        return {"fixed_point": self.fixed_point, "pass_mean": self.pass_mean, "consistency": self.consistency,
                "clipped": self.clipped, "p_range": [float(np.min(self.p)), float(np.max(self.p))]}


@dataclass
class ImprovementFlag:
    interval: List[float]
    kind: str
    condition: str
    label: str
    conclusive: bool
    report: ConditionReport

    def to_dict(self) -> Dict:
        return {"interval": self.interval, "kind": self.kind, "condition": self.condition, "label": self.label,
                "conclusive": self.conclusive, "report": self.report.to_dict()}


# ----------------------------------------------------------------------------
# envelope wage
# ----------------------------------------------------------------------------

def _quality_on(q: QualityPath, theta: np.ndarray) -> np.ndarray:
    if callable(q):
        return np.asarray(q(theta), dtype=float)
    values = np.asarray(q, dtype=float)
    if values.shape != theta.shape:
        raise ConfigValidationError("quality samples must match the type grid", field="allocation.q")
    return values


def envelope_wage(spec: ProblemSpec, q: QualityPath, U_bar: float = 0.0,
                  theta: Optional[np.ndarray] = None, breakpoints=()) -> Allocation:
    """
    Interim wage solving theta w - c(q) = int_{theta_lo}^theta w + U_bar

    w = c(q)/theta + U_bar/theta_lo + int c(q(x))/x^2 dx, accumulated cell by
    cell: quadrature when q is a function (breakpoints mark its jumps),
    trapezoid on the samples otherwise.
    """
    lo = spec.theta_lo
    if lo == 0 and U_bar > 0:
        raise DivergenceError("positive rent at the zero type", operation="envelope_wage")
    grid = spec.support.grid(spec.numerics.condition_grid) if theta is None else np.asarray(theta, dtype=float)
    quality = _quality_on(q, grid)
    cost = spec.cost
    burden = np.asarray(cost.c(quality), dtype=float)
    if callable(q):
        opts = spec.numerics
        integrand = lambda x: float(cost.c(float(np.atleast_1d(q(np.array([x])))[0]))) / (x * x)
        cells = [integrate(integrand, a, b, breakpoints=breakpoints, rel=opts.quad_rel, abs_tol=opts.quad_abs,
                           limit=opts.quad_limit) for a, b in zip(grid[:-1], grid[1:])]
        running = np.concatenate([[0.0], np.cumsum(cells)])
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            density = np.where(grid > 0, burden / grid ** 2, 0.0)
        running = cumulative_trapezoid(density, grid, initial=0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = np.where(grid > 0, burden / grid, 0.0)
    if grid[0] == 0 and burden[0] > 0:
        raise DivergenceError("c(q(0)) > 0 at the zero type", operation="envelope_wage")
    rent = U_bar / lo if lo > 0 else 0.0
    w = direct + rent + running
    return Allocation(theta=grid, q=quality, w=w, U_bar=U_bar)


def envelope_residual(spec: ProblemSpec, allocation: Allocation) -> float:
    """max |theta w - c(q) - int w - U_bar| with the integral by cumulative Simpson"""
    a = allocation
    integral = cumulative_simpson(a.w, x=a.theta, initial=0.0)
    residual = a.theta * a.w - np.asarray(spec.cost.c(a.q), dtype=float) - integral - a.U_bar
    return float(np.max(np.abs(residual)))


def allocation_from_scheme(spec: ProblemSpec, scheme: DeterministicScheme,
                           theta: Optional[np.ndarray] = None) -> Allocation:
    """Deterministic scheme as an allocation: w = q, U_bar from the bottom type"""
    grid = theta if theta is not None else build_grid(spec.theta_lo, spec.theta_hi, spec.numerics.condition_grid,
                                                      scheme.boundaries)
    q = np.atleast_1d(scheme_quality(spec, scheme, grid))
    lo = spec.theta_lo
    q_lo = float(q[0])
    U_bar = lo * q_lo - float(spec.cost.c(q_lo)) if lo > 0 else 0.0
    return Allocation(theta=np.asarray(grid, dtype=float), q=q, w=q.copy(), U_bar=U_bar)


# ----------------------------------------------------------------------------
# feasibility
# ----------------------------------------------------------------------------

def feasibility_check(spec: ProblemSpec, allocation: Allocation) -> FeasibilityReport:
    """
    MPS and BP of an allocation

    D(theta) = int (w - q) dF by cumulative trapezoid on the allocation grid;
    when w' <= q' everywhere BP alone decides feasibility.
    """
    a = allocation
    f = np.asarray(spec.dist.pdf(a.theta), dtype=float)
    D = cumulative_trapezoid((a.w - a.q) * f, a.theta, initial=0.0)
    below = np.nonzero(D < -MPS_TOL)[0]
    first = float(a.theta[below[0]]) if below.size else None
    bp = float(D[-1])
    bp_decides = bool(np.all(np.diff(a.w) <= np.diff(a.q) + 1e-12))
    report = FeasibilityReport(mps_holds=below.size == 0, bp_residual=bp, first_violation_theta=first, D=D,
                               min_margin=float(np.min(D)), bp_holds=abs(bp) <= MPS_TOL, bp_decides=bp_decides)
    if report.mps_holds:
        logger.info(f"✓ MPS holds (min D={report.min_margin:.3e}, BP residual={bp:.3e})")
    else:
        logger.info(f"✗ MPS violated from theta={first:.6g} (min D={report.min_margin:.3e})")
    return report


def elasticity(dist: Distribution, theta):
    """theta f'(theta) / f(theta)"""
    x = np.asarray(theta, dtype=float)
    value = x * np.asarray(dist.pdf_prime(x), dtype=float) / np.asarray(dist.pdf(x), dtype=float)
    return float(value) if np.ndim(theta) == 0 else value


# ----------------------------------------------------------------------------
# noisy test
# ----------------------------------------------------------------------------

def noisy_test(spec: ProblemSpec, allocation: Allocation) -> NoisyTest:
    """
    Rating that reveals q with probability 1 - p(q) and pools the rest

    The market wage as a function of quality, w_hat, must grow no faster
    than q; its fixed point q0 anchors p(q) = (q - w_hat(q)) / (q - q0).
    """
    a = allocation
    slack = np.diff(a.w) - np.diff(a.q)
    if np.any(slack > 1e-9):
        k = int(np.argmax(slack))
        raise PreconditionViolated(f"w' > q' at theta={a.theta[k]:.6g}", operation="noisy_test")
    quality, idx = np.unique(a.q, return_index=True)
    wage = a.w[idx]
    w_hat = lambda x: float(np.interp(x, quality, wage))
    gap = lambda x: w_hat(x) - x
    lo, hi = float(quality[0]), float(quality[-1])
    if gap(lo) <= 0:
        fixed = lo
    elif gap(hi) >= 0:
        fixed = hi
    else:
        fixed = find_root(gap, lo, hi, tol=spec.numerics.tol_root, operation="noisy_test")
    with np.errstate(divide="ignore", invalid="ignore"):
        raw = np.where(np.abs(quality - fixed) > 1e-12, (quality - wage) / (quality - fixed), 0.0)
    clipped = int(np.sum((raw < -1e-9) | (raw > 1 + 1e-9)))
    if clipped:
        logger.warning(f"{clipped} disclosure probabilities outside [0, 1] were clipped")
    p = np.clip(raw, 0.0, 1.0)

    # posterior mean of the pooled signal under the type distribution
    f = np.asarray(spec.dist.pdf(a.theta), dtype=float)
    p_types = np.interp(a.q, quality, p)
    mass = float(cumulative_trapezoid(p_types * f, a.theta, initial=0.0)[-1])
    pass_mean = float(cumulative_trapezoid(p_types * a.q * f, a.theta, initial=0.0)[-1]) / mass if mass > 0 \
        else fixed
    consistency = float(np.max(np.abs(wage - ((1 - p) * quality + p * pass_mean))))
    return NoisyTest(quality=quality, p=p, fixed_point=fixed, pass_mean=pass_mean, consistency=consistency,
                     clipped=clipped)


# ----------------------------------------------------------------------------
# improvability over deterministic schemes
# ----------------------------------------------------------------------------

def improvement_scan(spec: ProblemSpec, scheme: DeterministicScheme) -> List[ImprovementFlag]:
    """
    N1 on every revealing segment and N2 on every pool

    Pools entered from the outside option use the lower-censorship
    multiplier at their cutoff, pools entered by an interior jump use A_j.
    The relaxed N2 applies only to a single pool covering the whole support.
    An N1 failure is conclusive (stochastic ratings strictly improve); an N2
    failure only means the sufficient condition is not met.
    """
    flags: List[ImprovementFlag] = []
    for _, seg in scheme.reveal_segments():
        report = check_N1(spec, (seg.start, seg.end))
        if not report.holds:
            flags.append(ImprovementFlag(interval=[seg.start, seg.end], kind="reveal", condition="N1",
                                         label="improvable-by-stochastic", conclusive=True, report=report))
    jumps = {j.index: j for j in scheme_jumps(spec, scheme)}
    excluded = EXCLUSION in scheme.kinds
    for index, seg in scheme.pooling_segments():
        jump = jumps.get(index)
        theta_j = jump.theta if jump is not None else seg.start
        cutoff = min(max(theta_j, 0.0), spec.theta_hi)
        relaxed = index == 0 and not excluded and seg.end >= spec.theta_hi - spec.numerics.tol_cond
        if jump is not None and not jump.participation:
            A = jump_multiplier(spec, scheme, jump)
        else:
            A = A_multiplier(make_context(spec, cutoff))
        report = check_N2(spec, cutoff, (seg.start, seg.end), A=A, relaxed=relaxed)
        if not report.holds:
            flags.append(ImprovementFlag(interval=[seg.start, seg.end], kind="pooling", condition="N2",
                                         label="sufficiency-gap", conclusive=False, report=report))
    logger.info(f"Improvement scan: {len(flags)} flagged interval(s)")
    return flags


# ----------------------------------------------------------------------------
# constant testing fee
# ----------------------------------------------------------------------------

def _fee_weight(mode: str, param: Optional[float]) -> float:
    if mode == MONOPOLY:
        return 1.0
    if mode == REGULATOR:
        if param is None or param <= 0:
            raise ConfigValidationError("regulator weight must be positive", field="alpha")
        return (2.0 * param - 1.0) / param
    raise ConfigValidationError(f"unknown fee mode '{mode}'", field="mode")


def fee_margin(spec: ProblemSpec, mode: str, param: Optional[float], theta: float, q: float) -> float:
    """
    1 + k (1 - F)/f c_theta_q - c_q at (q, theta), k = 1 for a monopoly
    certifier and (2 alpha - 1)/alpha for a regulator; c(q, theta) = c(q)/theta
    """
    k = _fee_weight(mode, param)
    f = float(spec.dist.pdf(theta))
    if f <= 0 or theta <= 0:
        raise PreconditionViolated(f"density or type vanishes at theta={theta:.6g}", operation="fee_margin")
    hazard = (1.0 - float(spec.dist.cdf(theta))) / f
    slope = float(spec.cost.c1(q))
    return 1.0 - k * hazard * slope / theta ** 2 - slope / theta


def solve_fee_quality(spec: ProblemSpec, mode: str, param: Optional[float], theta: float) -> float:
    """Quality at which fee_margin vanishes; c'(q) = 1 / (1/theta + k (1-F)/(f theta^2))"""
    k = _fee_weight(mode, param)
    f = float(spec.dist.pdf(theta))
    if f <= 0 or theta <= 0:
        return 0.0
    hazard = (1.0 - float(spec.dist.cdf(theta))) / f
    denominator = 1.0 / theta + k * hazard / theta ** 2
    if denominator <= 0:
        raise PreconditionViolated(f"fee margin positive for every quality at theta={theta:.6g}",
                                   operation="solve_fee_quality")
    return q_full(spec, 1.0 / denominator)
