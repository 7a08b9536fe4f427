"""Primitives - ProblemSpec and the derived maps q_f, q_i, theta_c, theta_L, kappa"""
import logging
from dataclasses import dataclass, field, fields
from functools import cached_property
from typing import Dict, Tuple

import numpy as np
from scipy.optimize import minimize

from config.settings import cf
from src.core.costs import CostFn
from src.core.distributions import Distribution, Support
from src.core.objectives import Objective
from src.exceptions import ConfigValidationError, DegenerateCost, DownwardBiasViolation
from src.utils.numerics import expand_bracket, find_root

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NumericOptions:
    """Tolerances and grid sizes; defaults come from config/numerics.yaml"""
    tol_root: float = cf.numeric("tol_root")
    quad_rel: float = cf.numeric("quad_rel")
    quad_abs: float = cf.numeric("quad_abs")
    quad_limit: int = cf.numeric("quad_limit")
    tol_cond: float = cf.numeric("tol_cond")
    condition_grid: int = cf.numeric("condition_grid")
    refine_factor: int = cf.numeric("refine_factor")
    classify_scan: int = cf.numeric("classify_scan")
    classify_coarse_grid: int = cf.numeric("classify_coarse_grid")
    cutoff_scan: int = cf.numeric("cutoff_scan")
    tie_tol: float = cf.numeric("tie_tol")
    fd_step: float = cf.numeric("fd_step")
    kappa_grid: int = cf.numeric("kappa_grid")
    zero_guard: float = cf.numeric("zero_guard")
    signaling_grid: int = cf.numeric("signaling_grid")
    bruteforce_max: int = cf.numeric("bruteforce_max")
    threads: int = cf.THREADS
    debug: bool = cf.DEBUG

    @classmethod
    def from_overrides(cls, overrides: Dict) -> "NumericOptions":
        names = {f.name: f.type for f in fields(cls)}
        unknown = set(overrides) - set(names)
        if unknown:
            raise ConfigValidationError(f"unknown fields {sorted(unknown)}", field="numerics")
        values = {}
        for key, raw in overrides.items():
            cast = int if names[key] in (int, "int") else bool if names[key] in (bool, "bool") else float
            try:
                values[key] = cast(raw)
            except (TypeError, ValueError):
                raise ConfigValidationError(f"cannot read {raw!r}", field=f"numerics.{key}")
            if cast is not bool and values[key] <= 0:
                raise ConfigValidationError("must be positive", field=f"numerics.{key}")
        return cls(**values)

    def to_dict(self) -> Dict:
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name not in ("threads", "debug")}


@dataclass(frozen=True)
class ProblemSpec:
    """Immutable problem instance read by every solver"""
    support: Support
    dist: Distribution
    cost: CostFn
    objective: Objective
    numerics: NumericOptions = field(default_factory=NumericOptions)
    audit: bool = True

    def __post_init__(self):
        if self.dist.support != self.support:
            raise ConfigValidationError("distribution support differs from problem support", field="distribution")
        if self.objective.cost is not self.cost:
            raise ConfigValidationError("objective must be built on the problem cost", field="objective")
        if self.audit:
            holds, witness, value = audit_downward_bias(self)
            if not holds:
                raise DownwardBiasViolation(witness, value)

    @property
    def theta_lo(self) -> float:
        return self.support.theta_lo

    @property
    def theta_hi(self) -> float:
        return self.support.theta_hi

    @cached_property
    def q_max(self) -> float:
        """Top of the quality domain, q_i(theta_hi)"""
        return _indifference_quality(self.cost, self.support.theta_hi, self.numerics.tol_root)

    @cached_property
    def relative_concavity(self) -> float:
        return kappa(self)

    def describe(self) -> Dict:
        return {
            "support": {"theta_lo": self.theta_lo, "theta_hi": self.theta_hi},
            "distribution": self.dist.describe(),
            "cost": self.cost.describe(),
            "objective": self.objective.describe(),
        }


def _full_quality(cost: CostFn, theta: float, tol: float, hi0: float = 1.0) -> float:
    if theta <= 0:
        return 0.0
    residual = lambda q: float(cost.c1(q)) - theta
    hi = expand_bracket(residual, 0.0, hi0, operation="q_full")
    root = find_root(residual, 0.0, hi, tol=tol, operation="q_full")
    if cost.may_be_flat:
        # smallest q with c'(q) >= theta when c' is flat at the root
        lo = 0.0
        while root - lo > tol:
            mid = 0.5 * (lo + root)
            if float(cost.c1(mid)) >= theta - tol:
                root = mid
            else:
                lo = mid
    return root


def _indifference_quality(cost: CostFn, theta: float, tol: float) -> float:
    if theta <= 0:
        return 0.0
    lo = _full_quality(cost, theta, tol)
    gap = lambda q: float(cost.c(q)) - theta * q
    if gap(lo) >= 0:
        return lo
    hi = expand_bracket(gap, lo, max(lo, 1.0), operation="q_indiff")
    return find_root(gap, lo, hi, tol=tol, operation="q_indiff")


def q_full(spec: ProblemSpec, theta: float) -> float:
    """q_f(theta): c'(q) = theta, bracket [0, 2 q_max] expanded geometrically"""
    return _full_quality(spec.cost, float(theta), spec.numerics.tol_root, hi0=2.0 * spec.q_max)


def q_indiff(spec: ProblemSpec, theta: float) -> float:
    """q_i(theta): average cost c(q)/q = theta, on the branch q >= q_f(theta)"""
    return _indifference_quality(spec.cost, float(theta), spec.numerics.tol_root)


def theta_c(spec: ProblemSpec, theta0: float) -> float:
    return float(spec.cost.c1(q_indiff(spec, theta0)))


def theta_L(spec: ProblemSpec, theta0: float) -> float:
    return float(np.median([theta_c(spec, theta0), spec.theta_lo, spec.theta_hi]))


def q_full_array(spec: ProblemSpec, thetas) -> np.ndarray:
    """q_f on an array of types (closed form when the cost family has one)"""
    thetas = np.asarray(thetas, dtype=float)
    inverse = spec.cost.marginal_inverse(np.maximum(thetas, 0.0))
    if inverse is not None:
        return np.where(thetas > 0, inverse, 0.0)
    flat = np.array([q_full(spec, t) for t in thetas.ravel()])
    return flat.reshape(thetas.shape)


def kappa(spec: ProblemSpec) -> float:
    """
    Relative concavity inf -psi_qq / c'' over Q x Theta

    Linear delegation returns alpha exactly; otherwise a product-grid
    infimum refined by a bounded local minimisation.
    """
    objective = spec.objective
    if objective.is_linear_delegation:
        return float(objective.alpha)
    n = spec.numerics.kappa_grid
    qs = np.linspace(spec.numerics.zero_guard, spec.q_max, n)
    ts = spec.support.grid(n)
    Q, T = np.meshgrid(qs, ts, indexing="ij")
    curvature = np.asarray(spec.cost.c2(Q), dtype=float)
    concavity = -np.asarray(objective.psi_qq(Q, T), dtype=float)
    degenerate = (curvature <= 0) & (concavity > spec.numerics.tol_cond)
    if np.any(degenerate):
        i, j = np.argwhere(degenerate)[0]
        raise DegenerateCost(f"c''=0 with psi_qq<0 at q={qs[i]:.6g}, theta={ts[j]:.6g}", operation="kappa")
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(curvature > 0, concavity / curvature, np.inf)
    i, j = np.unravel_index(int(np.argmin(ratio)), ratio.shape)
    best = float(ratio[i, j])

    def objective_ratio(x):
        c2 = float(spec.cost.c2(x[0]))
        return -float(objective.psi_qq(x[0], x[1])) / c2 if c2 > 0 else np.inf

    refined = minimize(objective_ratio, x0=[qs[i], ts[j]], method="L-BFGS-B",
                       bounds=[(qs[0], qs[-1]), (ts[0], ts[-1])])
    if refined.success and np.isfinite(refined.fun):
        best = min(best, float(refined.fun))
    return max(best, 0.0)


def audit_downward_bias(spec: ProblemSpec) -> Tuple[bool, float, float]:
    """psi_q(q_f(theta), theta) >= 0 on a support grid; returns (holds, witness, value)"""
    thetas = spec.support.grid(spec.numerics.kappa_grid)
    slopes = np.asarray(spec.objective.psi_q(q_full_array(spec, thetas), thetas), dtype=float)
    k = int(np.argmin(slopes))
    holds = bool(slopes[k] >= -spec.numerics.tol_cond)
    if not holds:
        logger.warning(f"Downward bias fails at theta={thetas[k]:.6g} (psi_q={slopes[k]:.3e})")
    return holds, float(thetas[k]), float(slopes[k])
