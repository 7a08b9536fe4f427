"""Objectives - principal payoff psi(q, theta) with its partial derivatives"""
import logging
from typing import Dict, Optional, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator

from src.core.costs import CostFn, PowerCost
from src.exceptions import ConfigValidationError

logger = logging.getLogger(__name__)


class Objective:
    """
    Base objective; psi(0, theta) = 0 for every family

    Linear-delegation families also expose beta(theta), beta'(theta) and
    alpha so that psi = beta(theta) q - alpha c(q).
    """

    family = "abstract"
    is_linear_delegation = False
    alpha = 0.0

    def __init__(self, cost: CostFn):
        self.cost = cost

    def psi(self, q, theta):
        raise NotImplementedError

    def psi_q(self, q, theta):
        raise NotImplementedError

    def psi_qq(self, q, theta):
        raise NotImplementedError

    def psi_qtheta(self, q, theta):
        raise NotImplementedError

    def beta(self, theta):
        raise NotImplementedError(f"{self.family} is not linear delegation")

    def beta_prime(self, theta):
        raise NotImplementedError(f"{self.family} is not linear delegation")

    @property
    def params(self) -> Dict:
        return {}

    def describe(self) -> Dict:
        return {"family": self.family, **self.params}


class LinearDelegation(Objective):
    """psi = beta(theta) q - alpha c(q); beta affine (b0 + b1 theta) or tabulated"""

    family = "linear-delegation"
    is_linear_delegation = True

    def __init__(self, cost: CostFn, alpha: float = 0.0, b0: float = 1.0, b1: float = 0.0,
                 beta_theta: Optional[Sequence[float]] = None, beta_values: Optional[Sequence[float]] = None):
        super().__init__(cost)
        if alpha < 0:
            raise ConfigValidationError("alpha must be >= 0", field="objective.alpha")
        self.alpha = float(alpha)
        self.b0, self.b1 = float(b0), float(b1)
        self._table = None
        if beta_theta is not None or beta_values is not None:
            if beta_theta is None or beta_values is None or len(beta_theta) != len(beta_values):
                raise ConfigValidationError("beta_theta and beta_values must be given together",
                                            field="objective.beta_values")
            knots = np.asarray(beta_theta, dtype=float)
            if knots.size < 2 or np.any(np.diff(knots) <= 0):
                raise ConfigValidationError("beta_theta must be strictly increasing", field="objective.beta_theta")
            self._beta_table = (knots.tolist(), [float(v) for v in beta_values])
            self._table = PchipInterpolator(knots, np.asarray(beta_values, dtype=float))
            self._table_prime = self._table.derivative()

    @property
    def params(self):
        if self._table is not None:
            return {"alpha": self.alpha, "beta_theta": self._beta_table[0], "beta_values": self._beta_table[1]}
        return {"alpha": self.alpha, "b0": self.b0, "b1": self.b1}

    def beta(self, theta):
        if self._table is not None:
            return self._table(theta)
        return self.b0 + self.b1 * np.asarray(theta, dtype=float)

    def beta_prime(self, theta):
        if self._table is not None:
            return self._table_prime(theta)
        return np.zeros_like(np.asarray(theta, dtype=float)) + self.b1

    def psi(self, q, theta):
        return self.beta(theta) * q - self.alpha * self.cost.c(q)

    def psi_q(self, q, theta):
        return self.beta(theta) - self.alpha * self.cost.c1(q)

    def psi_qq(self, q, theta):
        return -self.alpha * self.cost.c2(q) + 0.0 * np.asarray(theta, dtype=float)

    def psi_qtheta(self, q, theta):
        return self.beta_prime(theta) + 0.0 * np.asarray(q, dtype=float)


class QualityMax(LinearDelegation):
    """psi = q"""

    family = "quality-max"

    def __init__(self, cost: CostFn):
        super().__init__(cost, alpha=0.0, b0=1.0, b1=0.0)

    @property
    def params(self):
        return {}


class QuadraticLoss(Objective):
    """
    psi = b(theta) q - q^2/2 with bliss point b(theta) = b0 + b1 theta;
    linear delegation (alpha = 1) exactly when c(q) = q^2/2
    """

    family = "quadratic-loss"

    def __init__(self, cost: CostFn, b0: float = 1.0, b1: float = 0.0):
        super().__init__(cost)
        self.b0, self.b1 = float(b0), float(b1)
        self.is_linear_delegation = (isinstance(cost, PowerCost) and cost.p == 2 and cost.scale == 1.0)
        self.alpha = 1.0 if self.is_linear_delegation else 0.0

    @property
    def params(self):
        return {"b0": self.b0, "b1": self.b1}

    def beta(self, theta):
        return self.b0 + self.b1 * np.asarray(theta, dtype=float)

    def beta_prime(self, theta):
        return np.zeros_like(np.asarray(theta, dtype=float)) + self.b1

    def psi(self, q, theta):
        q = np.asarray(q, dtype=float)
        return self.beta(theta) * q - q * q / 2

    def psi_q(self, q, theta):
        return self.beta(theta) - np.asarray(q, dtype=float)

    def psi_qq(self, q, theta):
        return -np.ones(np.broadcast(np.asarray(q), np.asarray(theta)).shape)

    def psi_qtheta(self, q, theta):
        return self.b1 + np.zeros(np.broadcast(np.asarray(q), np.asarray(theta)).shape)


class CostInternalization(Objective):
    """psi = q - gamma c(q)/theta: the principal bears a share gamma of the agent's cost"""

    family = "cost-internalization"

    def __init__(self, cost: CostFn, gamma: float, zero_guard: float = 1e-12):
        super().__init__(cost)
        if not 0 <= gamma <= 1:
            raise ConfigValidationError("gamma must lie in [0, 1]", field="objective.gamma")
        self.gamma = float(gamma)
        self.zero_guard = zero_guard

    @property
    def params(self):
        return {"gamma": self.gamma}

    def _theta(self, theta):
        return np.maximum(np.asarray(theta, dtype=float), self.zero_guard)

    def psi(self, q, theta):
        return np.asarray(q, dtype=float) - self.gamma * self.cost.c(q) / self._theta(theta)

    def psi_q(self, q, theta):
        return 1.0 - self.gamma * self.cost.c1(q) / self._theta(theta)

    def psi_qq(self, q, theta):
        return -self.gamma * self.cost.c2(q) / self._theta(theta)

    def psi_qtheta(self, q, theta):
        return self.gamma * self.cost.c1(q) / self._theta(theta) ** 2


class CustomTabulated(Objective):
    """State-independent psi whose marginal value g(q) = psi_q is tabulated (decreasing)"""

    family = "custom-tabulated"

    def __init__(self, cost: CostFn, q: Sequence[float], marginal: Sequence[float]):
        super().__init__(cost)
        knots = np.asarray(q, dtype=float)
        values = np.asarray(marginal, dtype=float)
        if knots.shape != values.shape or knots.size < 2 or knots[0] != 0.0:
            raise ConfigValidationError("q must start at 0 and match marginal in length", field="objective.q")
        if np.any(np.diff(knots) <= 0):
            raise ConfigValidationError("q must be strictly increasing", field="objective.q")
        if values[0] <= 0:
            raise ConfigValidationError("marginal value at q=0 must be positive", field="objective.marginal")
        if np.any(np.diff(values) > 0):
            raise ConfigValidationError("marginal value must be non-increasing (concave psi)",
                                        field="objective.marginal")
        self.knots, self.values = knots, values
        self._g = PchipInterpolator(knots, values)
        self._psi = self._g.antiderivative()
        self._g_prime = self._g.derivative()

    @property
    def params(self):
        return {"q": self.knots.tolist(), "marginal": self.values.tolist()}

    def _shape(self, q, theta):
        return np.broadcast(np.asarray(q), np.asarray(theta)).shape

    def psi(self, q, theta):
        return self._psi(q) + np.zeros(self._shape(q, theta))

    def psi_q(self, q, theta):
        return self._g(q) + np.zeros(self._shape(q, theta))

    def psi_qq(self, q, theta):
        return np.minimum(self._g_prime(q), 0.0) + np.zeros(self._shape(q, theta))

    def psi_qtheta(self, q, theta):
        return np.zeros(self._shape(q, theta))


def build_objective(family: str, params: Dict, cost: CostFn, zero_guard: float = 1e-12) -> Objective:
    allowed = {
        "quality-max": (),
        "linear-delegation": ("alpha", "b0", "b1", "beta_theta", "beta_values"),
        "quadratic-loss": ("b0", "b1"),
        "cost-internalization": ("gamma",),
        "custom-tabulated": ("q", "marginal"),
    }
    if family not in allowed:
        raise ConfigValidationError(f"unknown family '{family}'", field="objective.family")
    unknown = set(params) - set(allowed[family])
    if unknown:
        raise ConfigValidationError(f"unknown fields {sorted(unknown)}", field=f"objective({family})")
    try:
        if family == "quality-max":
            return QualityMax(cost)
        if family == "linear-delegation":
            return LinearDelegation(cost, **params)
        if family == "quadratic-loss":
            return QuadraticLoss(cost, **params)
        if family == "cost-internalization":
            return CostInternalization(cost, zero_guard=zero_guard, **params)
        return CustomTabulated(cost, **params)
    except TypeError as e:
        raise ConfigValidationError(str(e), field=f"objective({family})")
