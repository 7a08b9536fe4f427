"""Cost families c(q) (agent pays c(q)/theta) with c, c' and c''"""
import logging
from typing import Dict, Optional, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator

from src.exceptions import ConfigValidationError

logger = logging.getLogger(__name__)


class CostFn:
    """Base cost; vectorised in q"""

    family = "abstract"
    may_be_flat = False

    def c(self, q):
        raise NotImplementedError

    def c1(self, q):
        raise NotImplementedError

    def c2(self, q):
        raise NotImplementedError

    def marginal_inverse(self, y) -> Optional[np.ndarray]:
        """Closed-form inverse of c' when the family has one"""
        return None

    @property
    def params(self) -> Dict:
        return {}

    def describe(self) -> Dict:
        return {"family": self.family, **self.params}


class PowerCost(CostFn):
    """c(q) = scale * q^p / p"""

    def __init__(self, p: float, scale: float = 1.0, family: str = "power"):
        if p < 1:
            raise ConfigValidationError(f"exponent p must be >= 1, got {p}", field="cost.p")
        if scale <= 0:
            raise ConfigValidationError(f"scale must be positive, got {scale}", field="cost.scale")
        self.p = float(p)
        self.scale = float(scale)
        self.family = family

    @property
    def params(self):
        if self.family == "power":
            return {"p": self.p}
        return {"p": self.p, "scale": self.scale}

    def c(self, q):
        return self.scale * np.power(q, self.p) / self.p

    def c1(self, q):
        return self.scale * np.power(q, self.p - 1)

    def c2(self, q):
        q = np.asarray(q, dtype=float)
        if self.p == 2:
            out = np.full_like(q, self.scale)
        else:
            with np.errstate(divide="ignore"):
                out = self.scale * (self.p - 1) * np.power(q, self.p - 2)
        return out if out.ndim else float(out)

    def marginal_inverse(self, y):
        if self.p == 1:
            return None
        return np.power(np.maximum(np.asarray(y, dtype=float), 0.0) / self.scale, 1.0 / (self.p - 1))


class TabulatedConvexCost(CostFn):
    """
    c given on knots starting at (0, 0), joined by a PCHIP cubic; the table
    must reach beyond twice the top indifference quality
    """
    family = "tabulated-convex"
    may_be_flat = True

    def __init__(self, q: Sequence[float], c: Sequence[float]):
        knots = np.asarray(q, dtype=float)
        values = np.asarray(c, dtype=float)
        if knots.shape != values.shape or knots.size < 4:
            raise ConfigValidationError("q and c must have equal length >= 4", field="cost")
        if knots[0] != 0.0 or values[0] != 0.0:
            raise ConfigValidationError("table must start at (0, 0)", field="cost.q")
        if np.any(np.diff(knots) <= 0) or np.any(np.diff(values) <= 0):
            raise ConfigValidationError("q and c must be strictly increasing", field="cost.c")
        slopes = np.diff(values) / np.diff(knots)
        if np.any(np.diff(slopes) < -1e-12):
            raise ConfigValidationError("tabulated cost is not convex", field="cost.c")
        self.knots = knots
        self.values = values
        self._c = PchipInterpolator(knots, values)
        self._c1 = self._c.derivative()
        self._c2 = self._c.derivative(2)

    @property
    def params(self):
        return {"q": self.knots.tolist(), "c": self.values.tolist()}

    def c(self, q):
        return self._c(q)

    def c1(self, q):
        return self._c1(q)

    def c2(self, q):
        return np.maximum(self._c2(q), 0.0)


def build_cost(family: str, params: Dict) -> CostFn:
    allowed = {
        "power": ("p",),
        "scaled-power": ("p", "scale"),
        "tabulated-convex": ("q", "c"),
    }
    if family not in allowed:
        raise ConfigValidationError(f"unknown family '{family}'", field="cost.family")
    unknown = set(params) - set(allowed[family])
    if unknown:
        raise ConfigValidationError(f"unknown fields {sorted(unknown)}", field=f"cost({family})")
    try:
        if family == "tabulated-convex":
            return TabulatedConvexCost(**params)
        return PowerCost(family=family, **params)
    except TypeError as e:
        raise ConfigValidationError(str(e), field=f"cost({family})")
