"""Distributions - type supports and density families with the extension convention"""
import logging
from dataclasses import dataclass
from typing import Callable, Dict, Sequence, Tuple

import numpy as np
from numpy.polynomial import Polynomial
from scipy.interpolate import PchipInterpolator
from scipy.stats import beta as beta_law

from src.exceptions import ConfigValidationError, MalformedDistribution
from src.utils.numerics import integrate

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Support:
    """Type support [theta_lo, theta_hi]"""
    theta_lo: float
    theta_hi: float

    def __post_init__(self):
        if not np.isfinite(self.theta_lo) or self.theta_lo < 0:
            raise ConfigValidationError(f"theta_lo must be >= 0, got {self.theta_lo}", field="support.theta_lo")
        if not np.isfinite(self.theta_hi) or self.theta_hi <= self.theta_lo:
            raise ConfigValidationError(f"theta_hi must exceed theta_lo, got {self.theta_hi}",
                                        field="support.theta_hi")

    @property
    def width(self) -> float:
        return self.theta_hi - self.theta_lo

    def grid(self, n: int) -> np.ndarray:
        return np.linspace(self.theta_lo, self.theta_hi, n)


def _as_output(x, values):
    if np.ndim(x) == 0:
        return float(values)
    return values


class Distribution:
    """
    Base density on a Support

    Subclasses implement the density and CDF on the support; outside it
    f = 0, F = 0 below theta_lo and F = 1 above theta_hi exactly.
    """

    family = "abstract"

    def __init__(self, support: Support):
        self.support = support

    # hooks
    def _pdf(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _cdf(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _pdf_prime(self, x: np.ndarray):
        return None

    @property
    def params(self) -> Dict:
        return {}

    @property
    def breakpoints(self) -> Tuple[float, ...]:
        return self.support.theta_lo, self.support.theta_hi

    def pdf(self, theta):
        x = np.asarray(theta, dtype=float)
        lo, hi = self.support.theta_lo, self.support.theta_hi
        inside = (x >= lo) & (x <= hi)
        out = np.zeros_like(x)
        if np.any(inside):
            out[inside] = self._pdf(x[inside])
        return _as_output(theta, out)

    def cdf(self, theta):
        x = np.asarray(theta, dtype=float)
        lo, hi = self.support.theta_lo, self.support.theta_hi
        out = np.where(x > hi, 1.0, 0.0)
        inside = (x >= lo) & (x <= hi)
        if np.any(inside):
            out[inside] = np.clip(self._cdf(x[inside]), 0.0, 1.0)
        return _as_output(theta, out)

    def pdf_prime(self, theta):
        """f'(theta): analytic where the family has it, else centered differences"""
        x = np.asarray(theta, dtype=float)
        analytic = self._pdf_prime(np.atleast_1d(x))
        if analytic is None:
            lo, hi = self.support.theta_lo, self.support.theta_hi
            h = self.support.width / 4000.0
            xs = np.clip(np.atleast_1d(x), lo + h, hi - h)
            analytic = (self.pdf(xs + h) - self.pdf(xs - h)) / (2 * h)
        values = np.asarray(analytic, dtype=float).reshape(np.shape(x))
        return _as_output(theta, values)

    def expect(self, g: Callable[[float], float]) -> float:
        return integrate(lambda t: g(t) * self.pdf(t), self.support.theta_lo, self.support.theta_hi,
                         breakpoints=self.breakpoints)

    def mean(self) -> float:
        return self.expect(lambda t: t)

    def validate(self, samples: int = 1001):
        """Positivity on the interior and unit mass"""
        lo, hi = self.support.theta_lo, self.support.theta_hi
        interior = np.linspace(lo, hi, samples)[1:-1]
        dens = self.pdf(interior)
        if np.any(~np.isfinite(dens)) or np.min(dens) <= 0:
            k = int(np.argmin(np.where(np.isfinite(dens), dens, -np.inf)))
            raise MalformedDistribution(f"density not positive at theta={interior[k]:.6g}",
                                        field="distribution")
        mass = float(self.cdf(hi) - self.cdf(lo))
        if abs(mass - 1.0) > 1e-8:
            raise MalformedDistribution(f"total mass {mass:.12g} != 1", field="distribution")

    def describe(self) -> Dict:
        return {"family": self.family, **self.params}


class Uniform(Distribution):
    family = "uniform"

    def _pdf(self, x):
        return np.full_like(x, 1.0 / self.support.width)

    def _cdf(self, x):
        return (x - self.support.theta_lo) / self.support.width

    def _pdf_prime(self, x):
        return np.zeros_like(x)


class TruncatedExponential(Distribution):
    """f proportional to exp(-rate * theta); a negative rate gives an increasing density"""
    family = "truncated-exponential"

    def __init__(self, support: Support, rate: float):
        super().__init__(support)
        if rate == 0 or not np.isfinite(rate):
            raise ConfigValidationError("rate must be finite and non-zero", field="distribution.rate")
        self.rate = float(rate)
        self._norm = -np.expm1(-self.rate * support.width)

    @property
    def params(self):
        return {"rate": self.rate}

    def _pdf(self, x):
        return self.rate * np.exp(-self.rate * (x - self.support.theta_lo)) / self._norm

    def _cdf(self, x):
        return -np.expm1(-self.rate * (x - self.support.theta_lo)) / self._norm

    def _pdf_prime(self, x):
        return -self.rate * self._pdf(x)


class TruncatedPareto(Distribution):
    """f proportional to (theta + shift)^-(alpha + 1) on the support"""
    family = "truncated-pareto"

    def __init__(self, support: Support, alpha: float, shift: float = 0.0):
        super().__init__(support)
        if alpha <= 0:
            raise ConfigValidationError("alpha must be positive", field="distribution.alpha")
        if support.theta_lo + shift <= 0:
            raise ConfigValidationError("theta_lo + shift must be positive", field="distribution.shift")
        self.alpha = float(alpha)
        self.shift = float(shift)
        self._top = (support.theta_lo + shift) ** -alpha
        self._norm = (self._top - (support.theta_hi + shift) ** -alpha) / alpha

    @property
    def params(self):
        return {"alpha": self.alpha, "shift": self.shift}

    def _pdf(self, x):
        return (x + self.shift) ** -(self.alpha + 1) / self._norm

    def _cdf(self, x):
        return (self._top - (x + self.shift) ** -self.alpha) / (self.alpha * self._norm)

    def _pdf_prime(self, x):
        return -(self.alpha + 1) * self._pdf(x) / (x + self.shift)


class Triangular(Distribution):
    family = "triangular"

    def __init__(self, support: Support, mode: float):
        super().__init__(support)
        if not support.theta_lo <= mode <= support.theta_hi:
            raise ConfigValidationError("mode outside support", field="distribution.mode")
        self.mode = float(mode)

    @property
    def params(self):
        return {"mode": self.mode}

    @property
    def breakpoints(self):
        return self.support.theta_lo, self.mode, self.support.theta_hi

    def _pdf(self, x):
        lo, hi, m = self.support.theta_lo, self.support.theta_hi, self.mode
        w = hi - lo
        left = 2 * (x - lo) / (w * (m - lo)) if m > lo else np.zeros_like(x)
        right = 2 * (hi - x) / (w * (hi - m)) if hi > m else np.zeros_like(x)
        return np.where(x < m, left, right)

    def _cdf(self, x):
        lo, hi, m = self.support.theta_lo, self.support.theta_hi, self.mode
        w = hi - lo
        left = (x - lo) ** 2 / (w * (m - lo)) if m > lo else np.zeros_like(x)
        right = 1 - (hi - x) ** 2 / (w * (hi - m)) if hi > m else np.ones_like(x)
        return np.where(x < m, left, right)

    def _pdf_prime(self, x):
        lo, hi, m = self.support.theta_lo, self.support.theta_hi, self.mode
        w = hi - lo
        up = 2 / (w * (m - lo)) if m > lo else 0.0
        down = -2 / (w * (hi - m)) if hi > m else 0.0
        return np.where(x < m, up, down)


class PolynomialDensity(Distribution):
    """Density proportional to sum_k coefficients[k] * theta^k"""
    family = "polynomial"

    def __init__(self, support: Support, coefficients: Sequence[float]):
        super().__init__(support)
        if len(coefficients) == 0:
            raise ConfigValidationError("coefficients must be non-empty", field="distribution.coefficients")
        self.coefficients = tuple(float(c) for c in coefficients)
        raw = Polynomial(self.coefficients)
        antiderivative = raw.integ()
        norm = antiderivative(support.theta_hi) - antiderivative(support.theta_lo)
        if norm <= 0:
            raise MalformedDistribution("polynomial has non-positive mass", field="distribution.coefficients")
        self._poly = raw / norm
        self._anti = self._poly.integ()
        self._deriv = self._poly.deriv()
        self._base = self._anti(support.theta_lo)

    @property
    def params(self):
        return {"coefficients": list(self.coefficients)}

    def _pdf(self, x):
        return self._poly(x)

    def _cdf(self, x):
        return self._anti(x) - self._base

    def _pdf_prime(self, x):
        return self._deriv(x)


class BetaLike(Distribution):
    """Beta(a, b) law stretched onto the support"""
    family = "beta"

    def __init__(self, support: Support, a: float, b: float):
        super().__init__(support)
        if a <= 0 or b <= 0:
            raise ConfigValidationError("beta shape parameters must be positive", field="distribution")
        self.a, self.b = float(a), float(b)
        self._law = beta_law(self.a, self.b, loc=support.theta_lo, scale=support.width)

    @property
    def params(self):
        return {"a": self.a, "b": self.b}

    def _pdf(self, x):
        return self._law.pdf(x)

    def _cdf(self, x):
        return self._law.cdf(x)

    def _pdf_prime(self, x):
        lo, hi = self.support.theta_lo, self.support.theta_hi
        with np.errstate(divide="ignore", invalid="ignore"):
            slope = (self.a - 1) / (x - lo) - (self.b - 1) / (hi - x)
            out = self._law.pdf(x) * slope
        return np.where(np.isfinite(out), out, 0.0)


class Tabulated(Distribution):
    """
    Density samples joined by a monotone (PCHIP) cubic; F is its normalised
    antiderivative. The first and last knots must sit on the support ends.
    """
    family = "tabulated"

    def __init__(self, support: Support, theta: Sequence[float], density: Sequence[float]):
        super().__init__(support)
        knots = np.asarray(theta, dtype=float)
        dens = np.asarray(density, dtype=float)
        if knots.shape != dens.shape or knots.size < 3:
            raise ConfigValidationError("theta and density must have equal length >= 3", field="distribution")
        if np.any(np.diff(knots) <= 0):
            raise ConfigValidationError("theta knots must be strictly increasing", field="distribution.theta")
        if not (np.isclose(knots[0], support.theta_lo) and np.isclose(knots[-1], support.theta_hi)):
            raise ConfigValidationError("theta knots must span the support", field="distribution.theta")
        if np.any(dens[1:-1] <= 0) or np.any(dens < 0):
            raise MalformedDistribution("tabulated density must be positive inside", field="distribution.density")
        self.knots = knots
        self.values = dens
        raw = PchipInterpolator(knots, dens, extrapolate=False)
        anti = raw.antiderivative()
        norm = float(anti(knots[-1]))
        self._interp = PchipInterpolator(knots, dens / norm, extrapolate=False)
        self._anti = self._interp.antiderivative()

    @property
    def params(self):
        return {"theta": self.knots.tolist(), "density": self.values.tolist()}

    @property
    def breakpoints(self):
        return tuple(self.knots.tolist())

    def _pdf(self, x):
        return np.nan_to_num(self._interp(x))

    def _cdf(self, x):
        return np.nan_to_num(self._anti(x))


class Histogram(Distribution):
    """Piecewise-uniform density: heights on consecutive bins"""
    family = "histogram"

    def __init__(self, support: Support, edges: Sequence[float], heights: Sequence[float]):
        super().__init__(support)
        edges = np.asarray(edges, dtype=float)
        heights = np.asarray(heights, dtype=float)
        if edges.size != heights.size + 1 or heights.size == 0:
            raise ConfigValidationError("need len(edges) == len(heights) + 1", field="distribution")
        if np.any(np.diff(edges) <= 0):
            raise ConfigValidationError("edges must be strictly increasing", field="distribution.edges")
        if not (np.isclose(edges[0], support.theta_lo) and np.isclose(edges[-1], support.theta_hi)):
            raise ConfigValidationError("edges must span the support", field="distribution.edges")
        if np.any(heights <= 0):
            raise MalformedDistribution("histogram heights must be positive", field="distribution.heights")
        self.edges = edges
        self.heights = heights
        masses = heights * np.diff(edges)
        self._dens = heights / masses.sum()
        self._cum = np.concatenate([[0.0], np.cumsum(self._dens * np.diff(edges))])

    @property
    def params(self):
        return {"edges": self.edges.tolist(), "heights": self.heights.tolist()}

    @property
    def breakpoints(self):
        return tuple(self.edges.tolist())

    def _bin(self, x):
        return np.clip(np.searchsorted(self.edges, x, side="right") - 1, 0, self._dens.size - 1)

    def _pdf(self, x):
        return self._dens[self._bin(x)]

    def _cdf(self, x):
        k = self._bin(x)
        return self._cum[k] + self._dens[k] * (x - self.edges[k])

    def _pdf_prime(self, x):
        return np.zeros_like(x)


FAMILIES = {
    "uniform": (Uniform, ()),
    "truncated-exponential": (TruncatedExponential, ("rate",)),
    "truncated-pareto": (TruncatedPareto, ("alpha", "shift")),
    "triangular": (Triangular, ("mode",)),
    "polynomial": (PolynomialDensity, ("coefficients",)),
    "beta": (BetaLike, ("a", "b")),
    "tabulated": (Tabulated, ("theta", "density")),
    "histogram": (Histogram, ("edges", "heights")),
}


def build_distribution(family: str, params: Dict, support: Support) -> Distribution:
    """Instantiate and validate a distribution family from its tag"""
    if family not in FAMILIES:
        raise ConfigValidationError(f"unknown family '{family}'", field="distribution.family")
    cls, allowed = FAMILIES[family]
    unknown = set(params) - set(allowed)
    if unknown:
        raise ConfigValidationError(f"unknown fields {sorted(unknown)}", field=f"distribution({family})")
    try:
        dist = cls(support, **params)
    except TypeError as e:
        raise ConfigValidationError(str(e), field=f"distribution({family})")
    dist.validate()
    logger.debug(f"Built distribution {family} {params}")
    return dist
