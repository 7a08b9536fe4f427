import json

import pytest

from src.core.costs import build_cost
from src.core.distributions import Support, build_distribution
from src.core.objectives import build_objective
from src.core.primitives import NumericOptions, ProblemSpec


def build_spec(distribution="uniform", dist_params=None, support=(0.0, 1.0), cost=("power", {"p": 2}),
               objective=("quality-max", {}), audit=True, **numerics) -> ProblemSpec:
    """ProblemSpec from family tags, as a problem document would give them"""
    sup = Support(*support)
    c = build_cost(cost[0], dict(cost[1]))
    return ProblemSpec(
        support=sup,
        dist=build_distribution(distribution, dict(dist_params or {}), sup),
        cost=c,
        objective=build_objective(objective[0], dict(objective[1]), c),
        numerics=NumericOptions.from_overrides(numerics),
        audit=audit,
    )


@pytest.fixture
def make_spec():
    return build_spec


@pytest.fixture
def uniform_spec():
    return build_spec()


@pytest.fixture
def increasing_spec():
    """f = 2 theta on [0, 1]"""
    return build_spec("triangular", {"mode": 1.0})


@pytest.fixture
def decreasing_spec():
    """f = 2 - 2 theta on [0, 1]"""
    return build_spec("triangular", {"mode": 0.0})


@pytest.fixture
def triangular_spec():
    return build_spec("triangular", {"mode": 0.5})


@pytest.fixture
def left_skew_spec():
    """Unimodal on [1, 2] with the mode near the top; theta_c(theta_lo) reaches theta_hi"""
    return build_spec("triangular", {"mode": 1.7}, support=(1.0, 2.0))


@pytest.fixture
def pareto_spec():
    """Truncated Pareto with shift, so the support may start at zero"""
    return build_spec("truncated-pareto", {"alpha": 2.0, "shift": 1.0}, support=(0.0, 4.0))


@pytest.fixture
def running_example_spec():
    """psi = q, c = q^2/2, theta uniform on [1, 5]"""
    return build_spec(support=(1.0, 5.0))


@pytest.fixture
def two_standard_spec():
    return build_spec("histogram", {"edges": [0, 1, 2, 3, 4, 5], "heights": [0.2, 1.5, 0.2, 1.5, 0.2]},
                      support=(0.0, 5.0))


@pytest.fixture
def write_document(tmp_path):
    """Writes a problem document under tmp_path and returns its path"""

    def write(document, name="problem.json"):
        path = tmp_path / name
        path.write_text(json.dumps(document), encoding="utf-8")
        return path

    return write


@pytest.fixture
def uniform_document():
    return {
        "support": {"theta_lo": 0, "theta_hi": 1},
        "distribution": {"family": "uniform"},
        "cost": {"family": "power", "params": {"p": 2}},
        "objective": {"family": "quality-max"},
    }
