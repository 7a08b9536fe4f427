"""Characteristic functions r, R, the chord slope L and the multiplier A at a cutoff"""
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, Tuple

import numpy as np

from src.core.primitives import ProblemSpec, q_full_array, q_indiff, theta_c, theta_L
from src.exceptions import ValidityViolated
from src.utils.numerics import cumulative_cells, integrate

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CharacteristicCtx:
    """
    Cutoff-specific context

    mode is "linear" when the objective satisfies linear delegation, so r
    takes the closed (beta - alpha theta) f - alpha (F - F0) form; otherwise
    r is evaluated along the lower-censorship scheme at theta0 with kappa.
    """
    spec: ProblemSpec
    theta0: float
    kappa: float
    mode: str
    _memo: Dict = field(default_factory=dict, compare=False, repr=False)

    @cached_property
    def q0(self) -> float:
        return q_indiff(self.spec, self.theta0)

    @cached_property
    def theta_c(self) -> float:
        return theta_c(self.spec, self.theta0)

    @cached_property
    def theta_L(self) -> float:
        return theta_L(self.spec, self.theta0)

    @cached_property
    def F0(self) -> float:
        return float(self.spec.dist.cdf(self.theta0))

    @property
    def breakpoints(self) -> Tuple[float, ...]:
        pts = {self.spec.theta_lo, self.theta0, self.theta_c, self.spec.theta_hi}
        pts.update(self.spec.dist.breakpoints)
        return tuple(sorted(pts))


def make_context(spec: ProblemSpec, theta0: float) -> CharacteristicCtx:
    theta0 = float(theta0)
    if not 0.0 <= theta0 <= spec.theta_hi:
        raise ValueError(f"cutoff {theta0} outside [0, {spec.theta_hi}]")
    mode = "linear" if spec.objective.is_linear_delegation else "general"
    return CharacteristicCtx(spec=spec, theta0=theta0, kappa=spec.relative_concavity, mode=mode)


def _r_inside(ctx: CharacteristicCtx, x: np.ndarray) -> np.ndarray:
    spec, objective = ctx.spec, ctx.spec.objective
    f = np.asarray(spec.dist.pdf(x), dtype=float)
    F = np.asarray(spec.dist.cdf(x), dtype=float)
    drift = ctx.kappa * (F - ctx.F0)
    if ctx.mode == "linear":
        return (objective.beta(x) - objective.alpha * x) * f - drift
    out = np.empty_like(x)
    excluded = x < ctx.theta0
    pooled = (x >= ctx.theta0) & (x < ctx.theta_c)
    revealed = ~(excluded | pooled)
    if np.any(excluded):
        xe = x[excluded]
        out[excluded] = (objective.psi_q(0.0, xe) - ctx.kappa * xe) * f[excluded]
    if np.any(pooled):
        xp = x[pooled]
        out[pooled] = (objective.psi_q(ctx.q0, xp) - ctx.kappa * (xp - ctx.theta_c)) * f[pooled]
    if np.any(revealed):
        xr = x[revealed]
        out[revealed] = objective.psi_q(q_full_array(spec, xr), xr) * f[revealed]
    return out - drift


def r_of(ctx: CharacteristicCtx, theta):
    """
    r(theta), right-continuous at theta0 and theta_c

    Below theta_lo it equals kappa F(theta0); above theta_hi it equals
    -kappa (1 - F(theta0)).
    """
    x = np.atleast_1d(np.asarray(theta, dtype=float))
    lo, hi = ctx.spec.theta_lo, ctx.spec.theta_hi
    out = np.empty_like(x)
    below, above = x < lo, x > hi
    inside = ~(below | above)
    out[below] = ctx.kappa * ctx.F0
    out[above] = -ctx.kappa * (1.0 - ctx.F0)
    if np.any(inside):
        out[inside] = _r_inside(ctx, x[inside])
    return float(out[0]) if np.ndim(theta) == 0 else out


def r_left(ctx: CharacteristicCtx, theta: float) -> float:
    """Left limit r(theta-); differs from r_of only at the kinks"""
    spec = ctx.spec
    if theta <= spec.theta_lo:
        return ctx.kappa * ctx.F0
    if theta > spec.theta_hi:
        return -ctx.kappa * (1.0 - ctx.F0)
    f = float(spec.dist.pdf(min(theta, spec.theta_hi)))
    drift = ctx.kappa * (float(spec.dist.cdf(theta)) - ctx.F0)
    objective = spec.objective
    if ctx.mode == "linear":
        return float((objective.beta(theta) - objective.alpha * theta) * f - drift)
    if theta <= ctx.theta0:
        return float((objective.psi_q(0.0, theta) - ctx.kappa * theta) * f - drift)
    if theta <= ctx.theta_c:
        return float((objective.psi_q(ctx.q0, theta) - ctx.kappa * (theta - ctx.theta_c)) * f - drift)
    return r_of(ctx, theta)


def R_of(ctx: CharacteristicCtx, theta: float) -> float:
    """R(theta) = integral of r from theta_lo, split at every kink"""
    return integrate(lambda t: r_of(ctx, t), ctx.spec.theta_lo, float(theta), breakpoints=ctx.breakpoints,
                     rel=ctx.spec.numerics.quad_rel, abs_tol=ctx.spec.numerics.quad_abs,
                     limit=ctx.spec.numerics.quad_limit)


def R_table(ctx: CharacteristicCtx, grid) -> np.ndarray:
    """
    R on a sorted grid

    Cells are cut at the kinks and integrated by Gauss-Legendre, then
    accumulated; the table is memoised per context and grid.
    """
    grid = np.asarray(grid, dtype=float)
    key = (grid.size, float(grid[0]), float(grid[-1]), hash(grid.tobytes()))
    if key in ctx._memo:
        return ctx._memo[key]
    kinks = [p for p in ctx.breakpoints if grid[0] < p < grid[-1]]
    merged = np.unique(np.concatenate([grid, np.asarray(kinks, dtype=float)]))
    running = cumulative_cells(lambda t: r_of(ctx, t), merged)
    start = R_of(ctx, grid[0]) if grid[0] != ctx.spec.theta_lo else 0.0
    values = start + running[np.searchsorted(merged, grid)]
    ctx._memo[key] = values
    return values


def L_slope(ctx: CharacteristicCtx, theta: float, side: str = "right") -> float:
    """Chord slope of R between theta0 and theta; one-sided r limit at theta0"""
    theta = float(theta)
    if theta == ctx.theta0:
        return r_of(ctx, theta) if side == "right" else r_left(ctx, theta)
    gain = integrate(lambda t: r_of(ctx, t), ctx.theta0, theta, breakpoints=ctx.breakpoints,
                     rel=ctx.spec.numerics.quad_rel, abs_tol=ctx.spec.numerics.quad_abs,
                     limit=ctx.spec.numerics.quad_limit)
    return gain / (theta - ctx.theta0)


def A_multiplier_psi(ctx: CharacteristicCtx) -> float:
    """A from the psi_q integral over the pooling region [theta0, theta_L]"""
    width = ctx.theta_c - ctx.theta0
    if width <= 0:
        return r_of(ctx, ctx.theta0)
    objective, dist = ctx.spec.objective, ctx.spec.dist
    mass = integrate(lambda t: float(objective.psi_q(ctx.q0, t)) * dist.pdf(t),
                     max(ctx.theta0, ctx.spec.theta_lo), ctx.theta_L, breakpoints=ctx.breakpoints,
                     rel=ctx.spec.numerics.quad_rel, abs_tol=ctx.spec.numerics.quad_abs)
    return mass / width


def A_multiplier(ctx: CharacteristicCtx) -> float:
    """A(theta0) = L(theta_c | theta0); r(0+) when the chord degenerates"""
    if "A" in ctx._memo:
        return ctx._memo["A"]
    if ctx.theta_c <= ctx.theta0:
        value = r_of(ctx, ctx.theta0)
    else:
        value = L_slope(ctx, ctx.theta_c)
    if ctx.spec.numerics.debug:
        other = A_multiplier_psi(ctx)
        if abs(value - other) > 1e-8 * max(1.0, abs(value)):
            logger.error(f"A formulas disagree at theta0={ctx.theta0:.6g}: {value:.12g} vs {other:.12g}")
            raise ValidityViolated(f"A formulas disagree ({value:.3e} vs {other:.3e})", operation="A_multiplier")
    ctx._memo["A"] = value
    return value
