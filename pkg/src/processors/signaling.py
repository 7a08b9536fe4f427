"""Signaling - full separation under ability signaling, its J test and the testing-fee design"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid

from src.core.costs import CostFn
from src.core.primitives import ProblemSpec, q_full
from src.core.reports import ConditionReport
from src.exceptions import ConfigValidationError, ValidityViolated
from src.utils.numerics import build_grid, cumulative_cells, expand_bracket, find_root, integrate, \
    monotone_margin, rk4_path

logger = logging.getLogger(__name__)

# start of the separation path when theta_lo = 0
ZERO_START = 1e-6


@dataclass
class SeparationScheme:
    """Separating quality path with wage w = theta"""
    theta: np.ndarray
    q: np.ndarray
    ir_residual: float
    ode_residual: float
    integration_error: float

    @property
    def w(self) -> np.ndarray:
        return self.theta

    def w_hat(self, quality):
        """Market wage as a function of quality"""
        return np.interp(quality, self.q, self.theta)

    def quality_at(self, theta):
        return np.interp(theta, self.theta, self.q)

    def to_dict(self) -> Dict:
        return {"points": int(self.theta.size), "q_range": [float(self.q[0]), float(self.q[-1])],
                "ir_residual": self.ir_residual, "ode_residual": self.ode_residual,
                "integration_error": self.integration_error}


@dataclass
class FeeDesign:
    """Optimal quality, participation, fee and interim wage under a constant testing fee"""
    rho: float
    theta0: float
    fee: float
    theta: np.ndarray
    q: np.ndarray
    w: np.ndarray
    sigma: np.ndarray
    w_slope_max: float
    diagnostics: Dict = field(default_factory=dict)

    def to_dict(self) -> Dict:
        return {"rho": self.rho, "theta0": self.theta0, "fee": self.fee, "w_slope_max": self.w_slope_max,
                "participation": float(np.mean(self.sigma)), "diagnostics": self.diagnostics}


def _cost_inverse(cost: CostFn, level: float, tol: float) -> float:
    """q with c(q) = level"""
    if level <= 0:
        return 0.0
    gap = lambda q: float(cost.c(q)) - level
    hi = expand_bracket(gap, 0.0, 1.0, operation="full_separation")
    return find_root(gap, 0.0, hi, tol=tol, operation="full_separation")


def full_separation(spec: ProblemSpec) -> SeparationScheme:
    """
    q_f solving c'(q) q' = theta with the bottom type's IR binding

    RK4 on signaling_grid points from theta_lo (ZERO_START when theta_lo = 0,
    where c(q) = theta^2/2 gives the start value). Integrating the ODE gives
    c(q_f) = (theta^2 + theta_lo^2)/2, which measures the integration error.
    """
    opts, cost = spec.numerics, spec.cost
    lo, hi = spec.theta_lo, spec.theta_hi
    start = lo if lo > 0 else ZERO_START
    grid = np.linspace(start, hi, opts.signaling_grid)
    q0 = _cost_inverse(cost, (start ** 2 + lo ** 2) / 2.0, opts.tol_root)
    q = rk4_path(lambda t, y: t / float(cost.c1(y)), grid, q0)
    exact = (grid ** 2 + lo ** 2) / 2.0
    integration_error = float(np.max(np.abs(np.asarray(cost.c(q), dtype=float) - exact)))
    ir = lo - float(cost.c(q[0])) / lo if lo > 0 else 0.0
    slope = np.gradient(q, grid, edge_order=2)
    ode = float(np.max(np.abs(np.asarray(cost.c1(q), dtype=float) * slope - grid)))
    logger.info(f"Full separation on {grid.size} points: IR residual {ir:.2e}, ODE residual {ode:.2e}")
    return SeparationScheme(theta=grid, q=q, ir_residual=abs(ir), ode_residual=ode,
                            integration_error=integration_error)


def _weight(spec: ProblemSpec, scheme: SeparationScheme, x):
    """psi_q(q_f, x) / c'(q_f) along the separating path"""
    x = np.asarray(x, dtype=float)
    q = scheme.quality_at(x)
    return np.asarray(spec.objective.psi_q(q, x), dtype=float) / np.asarray(spec.cost.c1(q), dtype=float)


def J_of(spec: ProblemSpec, scheme: SeparationScheme, theta):
    """
    J = psi_q/c' * theta - int_theta^hi psi_q/c' dF / f(theta)

    Under linear delegation psi_q/c' = beta/c' - alpha, which the same
    expression covers.
    """
    opts = spec.numerics
    values = []
    for t in np.atleast_1d(np.asarray(theta, dtype=float)):
        tail = integrate(lambda x: float(_weight(spec, scheme, x)) * spec.dist.pdf(x), t, spec.theta_hi,
                         breakpoints=spec.dist.breakpoints, rel=opts.quad_rel, abs_tol=opts.quad_abs,
                         limit=opts.quad_limit)
        values.append(float(_weight(spec, scheme, t)) * t - tail / float(spec.dist.pdf(t)))
    return values[0] if np.ndim(theta) == 0 else np.array(values)


def J_table(spec: ProblemSpec, scheme: SeparationScheme, grid: np.ndarray) -> np.ndarray:
    """J on a sorted grid with the tail integral accumulated cell by cell"""
    weighted = lambda x: _weight(spec, scheme, x) * np.asarray(spec.dist.pdf(x), dtype=float)
    running = cumulative_cells(weighted, grid)
    opts = spec.numerics
    beyond = integrate(lambda x: float(_weight(spec, scheme, x)) * spec.dist.pdf(x), float(grid[-1]), spec.theta_hi,
                       breakpoints=spec.dist.breakpoints, rel=opts.quad_rel, abs_tol=opts.quad_abs,
                       limit=opts.quad_limit)
    tail = running[-1] - running + beyond
    return _weight(spec, scheme, grid) * grid - tail / np.asarray(spec.dist.pdf(grid), dtype=float)


def check_full_separation(spec: ProblemSpec, scheme: Optional[SeparationScheme] = None) -> ConditionReport:
    """Full separation is optimal iff J is increasing on the support"""
    scheme = scheme or full_separation(spec)
    opts = spec.numerics
    grid = build_grid(float(scheme.theta[0]), spec.theta_hi, opts.condition_grid, spec.dist.breakpoints)
    grid = grid[spec.dist.pdf(grid) > opts.zero_guard]
    values = J_table(spec, scheme, grid)
    margin, k = monotone_margin(values, "increasing")
    report = ConditionReport.from_margin("full-separation", margin, grid[k], opts.tol_cond,
                                         details={"J_range": [float(np.min(values)), float(np.max(values))]})
    if report.holds and abs(margin) <= opts.tol_cond:
        report.note = "weak"
    return report


def separation_at_top(spec: ProblemSpec, theta_L: float,
                      scheme: Optional[SeparationScheme] = None) -> ConditionReport:
    """q_f convex on [theta_L, theta_hi], by increasing first differences"""
    scheme = scheme or full_separation(spec)
    mask = scheme.theta >= theta_L
    theta, q = scheme.theta[mask], scheme.q[mask]
    if theta.size < 3:
        return ConditionReport.vacuous("separation-at-top", witness=theta_L)
    slopes = np.diff(q) / np.diff(theta)
    margin, k = monotone_margin(slopes, "increasing")
    report = ConditionReport.from_margin("separation-at-top", margin, theta[k], spec.numerics.tol_cond,
                                         details={"theta_L": theta_L})
    if report.holds and abs(margin) <= spec.numerics.tol_cond:
        report.note = "weak"
    return report


def additive_separation(spec: ProblemSpec) -> Tuple[SeparationScheme, ConditionReport]:
    """
    Effort path for an additive cost c(q - theta): c'(e)(1 + e') = 1 with
    c(e(theta_lo)) = theta_lo, and its index -1/c'(e) - (1-F)/f c''(e) e'/c'(e)^2
    which must increase for full separation to be optimal
    """
    opts, cost, dist = spec.numerics, spec.cost, spec.dist
    lo, hi = spec.theta_lo, spec.theta_hi
    if lo <= 0:
        raise ConfigValidationError("additive separation needs theta_lo > 0", field="support.theta_lo")
    grid = np.linspace(lo, hi, opts.signaling_grid)
    e0 = _cost_inverse(cost, lo, opts.tol_root)
    effort = rk4_path(lambda t, e: 1.0 / float(cost.c1(e)) - 1.0, grid, e0)
    slope = np.gradient(effort, grid, edge_order=2)
    c1 = np.asarray(cost.c1(effort), dtype=float)
    c2 = np.asarray(cost.c2(effort), dtype=float) * np.ones_like(grid)
    f = np.asarray(dist.pdf(grid), dtype=float)
    hazard = (1.0 - np.asarray(dist.cdf(grid), dtype=float)) / f
    J = -1.0 / c1 - hazard * c2 * slope / c1 ** 2
    ode = float(np.max(np.abs(c1 * (1.0 + slope) - 1.0)))
    scheme = SeparationScheme(theta=grid, q=grid + effort, ir_residual=abs(float(cost.c(e0)) - lo),
                              ode_residual=ode, integration_error=0.0)
    margin, k = monotone_margin(J, "increasing")
    report = ConditionReport.from_margin("full-separation", margin, grid[k], opts.tol_cond,
                                         details={"J_range": [float(np.min(J)), float(np.max(J))],
                                                  "effort_range": [float(np.min(effort)), float(np.max(effort))]})
    if report.holds and abs(margin) <= opts.tol_cond:
        report.note = "weak"
    return scheme, report


# ----------------------------------------------------------------------------
# constant testing fee
# ----------------------------------------------------------------------------

def _fee_quality(spec: ProblemSpec, rho: float, theta: np.ndarray) -> np.ndarray:
    """
    Pointwise c_q = (1-rho)/rho + (1-F)/f c_theta_q with c(q, theta) = c(q)/theta,
    i.e. c'(q) (1/theta + (1-F)/(f theta^2)) = (1-rho)/rho; zero-cost corner at rho = 1
    """
    target = (1.0 - rho) / rho
    out = np.zeros_like(theta)
    if target <= 0:
        return out
    f = np.asarray(spec.dist.pdf(theta), dtype=float)
    F = np.asarray(spec.dist.cdf(theta), dtype=float)
    for k, (t, fk, Fk) in enumerate(zip(theta, f, F)):
        if t <= 0 or fk <= 0:
            continue
        out[k] = q_full(spec, target / (1.0 / t + (1.0 - Fk) / (fk * t * t)))
    return out


def fee_design(spec: ProblemSpec, rho: float) -> FeeDesign:
    """
    Optimal rating with a constant testing fee and principal weight rho on the fee

    The cutoff is the last type whose marginal value of participation
    (1-rho) q + rho (theta - c + (1-F)/f c_theta) is negative; if none, theta_lo.
    The fee is E[theta] - E[c - (1-F)/f c_theta | theta >= theta0], and the
    wage w* = P* + int c_q q' must grow slower than one.
    """
    if not 0 < rho <= 1:
        raise ConfigValidationError(f"rho must lie in (0, 1], got {rho}", field="rho")
    opts, cost, dist = spec.numerics, spec.cost, spec.dist
    lo, hi = spec.theta_lo, spec.theta_hi
    grid = np.linspace(lo, hi, opts.signaling_grid)
    q = _fee_quality(spec, rho, grid)
    f = np.asarray(dist.pdf(grid), dtype=float)
    hazard = np.divide(1.0 - np.asarray(dist.cdf(grid), dtype=float), f, out=np.zeros_like(grid), where=f > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        burden = np.where(grid > 0, np.asarray(cost.c(q), dtype=float) / grid, 0.0)
        burden_theta = np.where(grid > 0, -np.asarray(cost.c(q), dtype=float) / grid ** 2, 0.0)
        c_q = np.where(grid > 0, np.asarray(cost.c1(q), dtype=float) / grid, 0.0)

    marginal = (1.0 - rho) * q + rho * (grid - burden + hazard * burden_theta)
    negative = np.nonzero(marginal < -opts.tol_cond)[0]
    theta0 = lo
    if negative.size:
        k = int(negative[-1])
        theta0 = float(grid[k])
        if k + 1 < grid.size:
            value = lambda t: float(np.interp(t, grid, marginal)) + opts.tol_cond
            theta0 = find_root(value, float(grid[k]), float(grid[k + 1]), tol=opts.tol_root, operation="fee_design")
    sigma = (grid >= theta0).astype(float)

    virtual_cost = burden - hazard * burden_theta
    upper = grid >= theta0
    mass = float(dist.cdf(hi) - dist.cdf(theta0))
    if upper.sum() > 1 and mass > 0:
        conditional = float(cumulative_trapezoid(virtual_cost[upper] * f[upper], grid[upper], initial=0.0)[-1]) / mass
    else:
        conditional = 0.0
    fee = dist.mean() - conditional

    slope = np.gradient(q, grid, edge_order=2) if grid.size > 2 else np.zeros_like(grid)
    w_slope = c_q * slope
    w = np.empty_like(grid)
    w[upper] = fee + cumulative_trapezoid(w_slope[upper], grid[upper], initial=0.0) if upper.any() else fee
    if (~upper).any():
        below_mass = float(dist.cdf(theta0))
        below_mean = integrate(lambda t: t * dist.pdf(t), lo, theta0, breakpoints=dist.breakpoints)
        w[~upper] = below_mean / below_mass if below_mass > 0 else lo
    w_slope_max = float(np.max(w_slope[upper])) if upper.any() else 0.0
    if w_slope_max >= 1.0:
        k = int(np.argmax(np.where(upper, w_slope, -np.inf)))
        raise ValidityViolated(f"w*' = {w_slope_max:.4g} >= 1 at theta={grid[k]:.6g}", operation="fee_design")
    logger.info(f"Fee design rho={rho}: theta0={theta0:.6g}, fee={fee:.10g}, max w*'={w_slope_max:.4g}")
    return FeeDesign(rho=rho, theta0=theta0, fee=fee, theta=grid, q=q, w=w, sigma=sigma, w_slope_max=w_slope_max,
                     diagnostics={"induced_cost": float(np.max(burden)), "participation": float(np.mean(sigma))})
