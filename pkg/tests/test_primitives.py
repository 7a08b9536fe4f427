import numpy as np
import pytest

from src.core.distributions import Support, build_distribution
from src.core.primitives import kappa, q_full, q_full_array, q_indiff, theta_c, theta_L
from src.exceptions import ConfigValidationError, DownwardBiasViolation, MalformedDistribution
from tests.conftest import build_spec


def test_quadratic_cost_closed_forms(uniform_spec):
    grid = np.linspace(0.0, 1.0, 1001)
    assert max(abs(q_full(uniform_spec, t) - t) for t in grid) <= 1e-9
    assert max(abs(q_indiff(uniform_spec, t) - 2 * t) for t in grid) <= 1e-9
    assert max(abs(theta_c(uniform_spec, t) - 2 * t) for t in grid) <= 1e-9


def test_zero_type_maps_to_zero(uniform_spec):
    assert q_full(uniform_spec, 0.0) == 0.0
    assert q_indiff(uniform_spec, 0.0) == 0.0
    assert theta_c(uniform_spec, 0.0) == 0.0


def test_cubic_cost():
    spec = build_spec(support=(0.0, 10.0), cost=("power", {"p": 3}))
    assert q_full(spec, 4.0) == pytest.approx(2.0, abs=1e-9)
    assert q_indiff(spec, 3.0) == pytest.approx(3.0, abs=1e-9)
    assert theta_c(spec, 3.0) == pytest.approx(9.0, abs=1e-8)


def test_theta_L_is_clamped_median(uniform_spec):
    assert theta_L(uniform_spec, 0.2) == pytest.approx(0.4)
    assert theta_L(uniform_spec, 0.8) == 1.0
    spec = build_spec(support=(1.0, 2.0))
    assert theta_L(spec, 0.3) == 1.0


def test_q_max_is_top_indifference_quality(uniform_spec):
    assert uniform_spec.q_max == pytest.approx(2.0, abs=1e-9)


def test_vectorised_full_quality_matches_scalar():
    spec = build_spec(support=(0.0, 10.0), cost=("power", {"p": 3}))
    thetas = np.linspace(0.0, 10.0, 11)
    expected = [q_full(spec, t) for t in thetas]
    np.testing.assert_allclose(q_full_array(spec, thetas), expected, atol=1e-9)


def test_kappa_linear_delegation_is_alpha():
    spec = build_spec(objective=("linear-delegation", {"alpha": 0.5, "b0": 2.0}))
    assert kappa(spec) == 0.5


def test_kappa_quadratic_loss_is_one():
    spec = build_spec(objective=("quadratic-loss", {"b0": 1.0}))
    assert spec.objective.is_linear_delegation
    assert kappa(spec) == 1.0


def test_kappa_general_mode_grid_infimum():
    spec = build_spec(support=(0.5, 1.0), objective=("cost-internalization", {"gamma": 0.5}))
    # -psi_qq / c'' = gamma / theta, smallest at the top type
    assert kappa(spec) == pytest.approx(0.5, abs=1e-9)


def test_downward_bias_violation_names_witness():
    with pytest.raises(DownwardBiasViolation) as info:
        build_spec(support=(0.0, 2.0), objective=("quadratic-loss", {"b0": 1.0}))
    assert info.value.witness > 1.0
    assert info.value.field == "objective"


def test_unknown_family_is_rejected():
    with pytest.raises(ConfigValidationError):
        build_distribution("lognormal", {}, Support(0.0, 1.0))


def test_bad_support():
    with pytest.raises(ConfigValidationError):
        Support(1.0, 1.0)
    with pytest.raises(ConfigValidationError):
        Support(-0.5, 1.0)


def test_histogram_with_zero_bin_is_malformed():
    with pytest.raises(MalformedDistribution):
        build_distribution("histogram", {"edges": [0, 0.5, 1], "heights": [1.0, 0.0]}, Support(0.0, 1.0))


def test_extension_convention(triangular_spec):
    dist = triangular_spec.dist
    assert dist.pdf(-0.1) == 0.0
    assert dist.cdf(-0.1) == 0.0
    assert dist.cdf(1.5) == 1.0
    assert dist.cdf(1.0) == pytest.approx(1.0, abs=1e-12)


def test_pareto_shift_allows_zero_lower_bound(pareto_spec):
    assert pareto_spec.dist.pdf(0.0) > pareto_spec.dist.pdf(4.0)
    assert pareto_spec.dist.mean() == pytest.approx(pareto_spec.dist.expect(lambda t: t))
