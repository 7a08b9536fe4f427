"""Numerics - root finding, quadrature, grids and monotonicity margins"""
import logging
from typing import Callable, Iterable, Sequence, Tuple

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from src.exceptions import BracketFailure

logger = logging.getLogger(__name__)

_GAUSS_ORDER = 5
_GAUSS_NODES, _GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(_GAUSS_ORDER)


def find_root(fn: Callable[[float], float], lo: float, hi: float,
              tol: float = 1e-10, operation: str = "find_root") -> float:
    """
    Bracketed root of a scalar function

    Args:
        fn: scalar function with a sign change on [lo, hi]
        lo, hi: bracket
        tol: absolute tolerance on the abscissa (the defining residuals are
            Lipschitz on the brackets used here, so this bounds them too)
        operation: name reported when the bracket is invalid
    Returns:
        x with fn(x) ~ 0
    """
    f_lo = fn(lo)
    if f_lo == 0.0:
        return lo
    f_hi = fn(hi)
    if f_hi == 0.0:
        return hi
    if np.sign(f_lo) == np.sign(f_hi):
        raise BracketFailure(f"no sign change on [{lo:.6g}, {hi:.6g}]", operation=operation)
    return brentq(fn, lo, hi, xtol=min(tol, 1e-12), rtol=4 * np.finfo(float).eps, maxiter=500)


def expand_bracket(fn: Callable[[float], float], lo: float, hi: float,
                   max_doublings: int = 80, operation: str = "expand_bracket") -> float:
    """Double hi until fn changes sign between lo and hi; returns the new hi"""
    f_lo = np.sign(fn(lo))
    width = max(hi - lo, 1e-12)
    for _ in range(max_doublings):
        if np.sign(fn(lo + width)) != f_lo:
            return lo + width
        width *= 2.0
    raise BracketFailure(f"no sign change up to {lo + width:.3e}", operation=operation)


def integrate(fn: Callable[[float], float], a: float, b: float, breakpoints: Iterable[float] = (),
              rel: float = 1e-9, abs_tol: float = 1e-12, limit: int = 200) -> float:
    """
    Adaptive quadrature of fn over [a, b] (or -[b, a] when b < a)

    Breakpoints inside the interval split it, so the integrator never
    straddles a kink or jump.
    """
    if a == b:
        return 0.0
    sign = 1.0
    if b < a:
        a, b, sign = b, a, -1.0
    cuts = sorted({float(p) for p in breakpoints if a < p < b})
    nodes = [a] + cuts + [b]
    total = 0.0
    for lo, hi in zip(nodes[:-1], nodes[1:]):
        value, _ = quad(fn, lo, hi, epsrel=rel, epsabs=abs_tol, limit=limit)
        total += value
    return sign * total


def build_grid(lo: float, hi: float, n: int, extra: Iterable[float] = ()) -> np.ndarray:
    """Uniform grid on [lo, hi] with the extra points inside it merged in"""
    if hi <= lo:
        return np.array([lo], dtype=float)
    base = np.linspace(lo, hi, n)
    pts = [p for p in extra if lo < p < hi]
    return np.unique(np.concatenate([base, np.asarray(pts, dtype=float)]))


def cell_integrals(fn: Callable[[np.ndarray], np.ndarray], grid: np.ndarray) -> np.ndarray:
    """Gauss-Legendre integral of a vectorised fn over every cell of the grid"""
    grid = np.asarray(grid, dtype=float)
    if grid.size < 2:
        return np.zeros(0)
    lo, hi = grid[:-1], grid[1:]
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    points = mid[:, None] + half[:, None] * _GAUSS_NODES[None, :]
    values = np.asarray(fn(points.ravel()), dtype=float).reshape(points.shape)
    return half * (values @ _GAUSS_WEIGHTS)


def cumulative_cells(fn: Callable[[np.ndarray], np.ndarray], grid: np.ndarray) -> np.ndarray:
    """Running integral of fn from grid[0] to every grid node"""
    return np.concatenate([[0.0], np.cumsum(cell_integrals(fn, grid))])


def monotone_margin(values: Sequence[float], direction: str) -> Tuple[float, int]:
    """
    Signed monotonicity slack at grid resolution

    Args:
        values: samples on an increasing grid
        direction: "decreasing" or "increasing"
    Returns:
        (margin, index): margin >= 0 when monotone; index is the left node of
        the worst adjacent pair
    """
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        return 0.0, 0
    diffs = np.diff(values)
    if direction == "decreasing":
        idx = int(np.argmax(diffs))
        return float(-diffs[idx]), idx
    if direction == "increasing":
        idx = int(np.argmin(diffs))
        return float(diffs[idx]), idx
    raise ValueError(f"unknown direction {direction}")


def refine_min(fn: Callable[[float], float], grid: np.ndarray, idx: int,
               factor: int = 10) -> Tuple[float, float]:
    """Minimum of fn on a factor-times finer grid over the cells around grid[idx]"""
    lo = grid[max(idx - 1, 0)]
    hi = grid[min(idx + 1, len(grid) - 1)]
    if hi <= lo:
        return float(fn(grid[idx])), float(grid[idx])
    pts = np.linspace(lo, hi, 2 * factor + 1)
    vals = np.array([fn(p) for p in pts])
    k = int(np.argmin(vals))
    return float(vals[k]), float(pts[k])


def centered_difference(fn: Callable[[float], float], x: float, h: float) -> float:
    return (fn(x + h) - fn(x - h)) / (2.0 * h)


def rk4_path(rhs: Callable[[float, float], float], grid: np.ndarray, y0: float) -> np.ndarray:
    """Classic fourth-order Runge-Kutta along a (possibly non-uniform) grid"""
    grid = np.asarray(grid, dtype=float)
    y = np.empty_like(grid)
    y[0] = y0
    for k in range(len(grid) - 1):
        t, h = grid[k], grid[k + 1] - grid[k]
        k1 = rhs(t, y[k])
        k2 = rhs(t + h / 2, y[k] + h * k1 / 2)
        k3 = rhs(t + h / 2, y[k] + h * k2 / 2)
        k4 = rhs(t + h, y[k] + h * k3)
        y[k + 1] = y[k] + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6
    return y
