import numpy as np
import pytest

from src.core.scheme import EXCLUSION, POOLING, REVEAL, DeterministicScheme, Segment, scheme_jumps
from src.exceptions import ConfigValidationError, DivergenceError, PreconditionViolated
from src.processors.censorship_solver import build_scheme
from src.processors.conditions import jump_multiplier
from src.processors.stochastic import (MONOPOLY, REGULATOR, Allocation, allocation_from_scheme, envelope_residual,
                                       envelope_wage, fee_margin, feasibility_check, improvement_scan, noisy_test,
                                       solve_fee_quality)
from tests.conftest import build_spec


def running_example_quality(theta):
    return 0.4 * np.asarray(theta) ** 2


def test_envelope_wage_matches_closed_form(running_example_spec):
    grid = np.linspace(1.0, 5.0, 401)
    allocation = envelope_wage(running_example_spec, running_example_quality, theta=grid)
    np.testing.assert_allclose(allocation.w, 8 / 75 * grid ** 3 - 2 / 75, atol=1e-9)
    assert envelope_residual(running_example_spec, allocation) <= 1e-6


def test_sampled_quality_uses_trapezoid(running_example_spec):
    grid = np.linspace(1.0, 5.0, 2001)
    allocation = envelope_wage(running_example_spec, running_example_quality(grid), theta=grid)
    np.testing.assert_allclose(allocation.w, 8 / 75 * grid ** 3 - 2 / 75, atol=1e-4)


def test_running_example_violates_MPS(running_example_spec):
    grid = np.linspace(1.0, 5.0, 401)
    allocation = envelope_wage(running_example_spec, running_example_quality, theta=grid)
    report = feasibility_check(running_example_spec, allocation)
    assert not report.mps_holds
    assert 1.0 < report.first_violation_theta < 5.0
    assert report.min_margin < 0
    assert not report.feasible


def test_positive_rent_at_zero_type_diverges(uniform_spec):
    with pytest.raises(DivergenceError):
        envelope_wage(uniform_spec, lambda t: np.asarray(t), U_bar=0.1)


def test_rent_constant_enters_wage(running_example_spec):
    grid = np.linspace(1.0, 5.0, 101)
    base = envelope_wage(running_example_spec, running_example_quality, theta=grid)
    shifted = envelope_wage(running_example_spec, running_example_quality, U_bar=0.3, theta=grid)
    np.testing.assert_allclose(shifted.w - base.w, 0.3, atol=1e-12)


def test_deterministic_scheme_is_feasible(triangular_spec):
    scheme = build_scheme(triangular_spec, (8 + np.sqrt(8)) / 28)
    allocation = allocation_from_scheme(triangular_spec, scheme)
    np.testing.assert_array_equal(allocation.w, allocation.q)
    report = feasibility_check(triangular_spec, allocation)
    assert report.mps_holds
    assert report.bp_holds
    assert report.feasible


def test_allocation_validation():
    with pytest.raises(ConfigValidationError):
        Allocation(theta=[0.0, 1.0], q=[1.0, 0.5], w=[0.0, 1.0])
    with pytest.raises(ConfigValidationError):
        Allocation(theta=[0.0, 0.0], q=[0.0, 0.5], w=[0.0, 1.0])
    with pytest.raises(ConfigValidationError):
        Allocation(theta=[0.0], q=[0.0], w=[0.0])


def test_noisy_test_constant_disclosure(uniform_spec):
    theta = np.linspace(0.0, 1.0, 201)
    allocation = Allocation(theta=theta, q=theta, w=0.5 * theta + 0.25)
    test = noisy_test(uniform_spec, allocation)
    assert test.fixed_point == pytest.approx(0.5, abs=1e-9)
    off = np.abs(test.quality - 0.5) > 1e-6
    np.testing.assert_allclose(test.p[off], 0.5, atol=1e-9)
    assert test.pass_mean == pytest.approx(0.5, abs=1e-6)
    assert test.consistency < 1e-6
    assert test.clipped == 0


def test_noisy_test_needs_flat_wage(uniform_spec):
    theta = np.linspace(0.0, 1.0, 11)
    with pytest.raises(PreconditionViolated):
        noisy_test(uniform_spec, Allocation(theta=theta, q=theta, w=2 * theta))


def test_improvement_scan_flags_increasing_elasticity():
    spec = build_spec("polynomial", {"coefficients": [1.0, 0.0, 1.0]})
    flags = improvement_scan(spec, build_scheme(spec, 0.0))
    assert len(flags) == 1
    assert flags[0].condition == "N1"
    assert flags[0].conclusive
    assert flags[0].interval == [0.0, 1.0]


def test_improvement_scan_clean_on_pareto():
    spec = build_spec("truncated-pareto", {"alpha": 2.0}, support=(1.0, 4.0))
    flags = improvement_scan(spec, build_scheme(spec, 0.0))
    assert not [f for f in flags if f.conclusive]


def test_monopoly_fee_quality_zeroes_margin(running_example_spec):
    q = solve_fee_quality(running_example_spec, MONOPOLY, None, 2.0)
    # hazard 3 at theta = 2: c'(q) = 1 / (1/2 + 3/4)
    assert q == pytest.approx(0.8, abs=1e-9)
    assert fee_margin(running_example_spec, MONOPOLY, None, 2.0, q) == pytest.approx(0.0, abs=1e-9)


def test_even_regulator_weight_gives_full_quality(running_example_spec):
    for theta in (1.5, 3.0, 4.5):
        q = solve_fee_quality(running_example_spec, REGULATOR, 0.5, theta)
        assert q == pytest.approx(theta, abs=1e-9)


def test_fee_mode_validation(running_example_spec):
    with pytest.raises(ConfigValidationError):
        solve_fee_quality(running_example_spec, "auction", None, 2.0)
    with pytest.raises(ConfigValidationError):
        solve_fee_quality(running_example_spec, REGULATOR, 0.0, 2.0)


def test_first_pool_short_of_the_top_uses_strict_N2():
    spec = build_spec("histogram", {"edges": [1.0, 1.5, 2.0, 3.0], "heights": [0.8, 0.6, 0.3]}, support=(1.0, 3.0))
    scheme = DeterministicScheme(segments=(Segment(1.0, 2.0, POOLING, 2.0), Segment(2.0, 3.0, REVEAL)))
    flags = improvement_scan(spec, scheme)
    assert [(f.condition, f.interval) for f in flags] == [("N2", [1.0, 2.0])]
    assert not flags[0].conclusive
    assert flags[0].report.note == ""


def test_pool_over_whole_support_uses_relaxed_N2():
    # strict N2 fails on the falling density; the relaxed form is flat for psi = q
    spec = build_spec("histogram", {"edges": [1.0, 1.5, 2.0], "heights": [0.8, 0.6]}, support=(1.0, 2.0))
    scheme = DeterministicScheme(segments=(Segment(1.0, 2.0, POOLING, 2.0),))
    assert improvement_scan(spec, scheme) == []


def test_interior_pool_uses_jump_multiplier():
    # density drops inside the upper pool [3, 4), so N2 fails there
    spec = build_spec("histogram", {"edges": [0, 1, 2, 3, 3.5, 4, 5], "heights": [0.2, 1.5, 0.2, 1.5, 0.5, 0.2]},
                      support=(0.0, 5.0))
    scheme = DeterministicScheme(segments=(Segment(0.0, 1.0, EXCLUSION), Segment(1.0, 3.0, POOLING, 2.0),
                                           Segment(3.0, 4.0, POOLING, 4.0), Segment(4.0, 5.0, REVEAL)),
                                 cutoff=1.0)
    flags = {tuple(f.interval): f for f in improvement_scan(spec, scheme)}
    upper = flags[(3.0, 4.0)]
    jump = [j for j in scheme_jumps(spec, scheme) if j.theta == 3.0][0]
    expected = float(spec.dist.cdf(4.0) - spec.dist.cdf(3.0))
    assert upper.report.details["A"] == pytest.approx(jump_multiplier(spec, scheme, jump), abs=1e-12)
    assert upper.report.details["A"] == pytest.approx(expected, abs=1e-9)
