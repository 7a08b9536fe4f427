import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from src.core.scheme import EXCLUSION, POOLING, REVEAL
from src.processors.censorship_solver import (FULLY_REVEALING, LOWER_CENSORSHIP, MULTI_STANDARD, PASS_FAIL, V_of,
                                              V_prime, build_scheme, classify_regime, regime_of, solve_cutoff)
from src.utils.numerics import centered_difference
from tests.conftest import build_spec

TRIANGULAR_CUTOFF = (8 + np.sqrt(8)) / 28


def test_uniform_value_is_flat_below_half(uniform_spec):
    for t in (0.0, 0.1, 0.3, 0.5):
        assert V_of(uniform_spec, t) == pytest.approx(0.5, abs=1e-10)
    assert V_of(uniform_spec, 0.8) == pytest.approx(2 * 0.8 * 0.2, abs=1e-10)


def test_uniform_tie_reports_pass_fail(uniform_spec):
    result = classify_regime(uniform_spec)
    assert result.cutoff == 0.0
    assert result.regime == FULLY_REVEALING
    assert result.value == pytest.approx(0.5, abs=1e-9)
    assert PASS_FAIL in {tie["regime"] for tie in result.ties}


def test_increasing_density_is_pass_fail(increasing_spec):
    solution = solve_cutoff(increasing_spec)
    assert solution.theta0 == pytest.approx(1 / np.sqrt(3), abs=1e-7)
    assert solution.status == "interior-root"
    assert regime_of(increasing_spec, build_scheme(increasing_spec, solution.theta0)) == PASS_FAIL


def test_decreasing_density_is_fully_revealing(decreasing_spec):
    solution = solve_cutoff(decreasing_spec)
    assert solution.theta0 == 0.0
    assert solution.status == "boundary"
    assert classify_regime(decreasing_spec).regime == FULLY_REVEALING


def test_triangular_density_is_lower_censorship(triangular_spec):
    result = classify_regime(triangular_spec)
    assert result.cutoff == pytest.approx(TRIANGULAR_CUTOFF, abs=1e-7)
    assert result.regime == LOWER_CENSORSHIP
    pool = result.scheme.segments[1]
    assert pool.kind == POOLING
    assert pool.start <= 0.5 < pool.end
    assert all(r.holds for r in result.reports)


def test_left_skewed_density_pools_to_the_top(left_skew_spec):
    result = classify_regime(left_skew_spec)
    assert result.regime == PASS_FAIL
    assert result.scheme.kinds == [EXCLUSION, POOLING]


def test_pareto_is_fully_revealing(pareto_spec):
    assert classify_regime(pareto_spec).regime == FULLY_REVEALING


def test_two_peaks_give_two_standards(two_standard_spec):
    result = classify_regime(two_standard_spec)
    assert result.regime == MULTI_STANDARD
    assert result.scheme.standards[:2] == pytest.approx([2.0, 4.0], abs=1e-6)
    # pool [1, 3) at 2, pool [3, 4) at 4, reveal above 4
    assert result.value == pytest.approx(103 / 36, abs=1e-6)
    assert result.value > V_of(two_standard_spec, result.cutoff) + 1e-3
    assert result.oracle_agreement is True


def test_V_prime_closed_form_on_increasing_density(increasing_spec):
    for t in (0.2, 0.4):
        assert V_prime(increasing_spec, t) == pytest.approx(2 * t ** 2, abs=1e-8)
    for t in (0.6, 0.9):
        assert V_prime(increasing_spec, t) == pytest.approx(2 - 6 * t ** 2, abs=1e-8)


def test_V_prime_matches_finite_difference(triangular_spec):
    numeric = centered_difference(lambda t: V_of(triangular_spec, t), 0.1, 1e-3)
    assert V_prime(triangular_spec, 0.1) == pytest.approx(numeric, abs=1e-5)


@pytest.mark.slow
@settings(max_examples=100, deadline=None)
@given(mode=st.floats(0.2, 0.8), theta0=st.floats(0.02, 0.98))
def test_V_prime_matches_finite_difference_on_random_draws(mode, theta0):
    # V' has kinks where theta0, 2 theta0 or theta_L cross the mode or the top
    for kink in (mode, mode / 2, 0.5):
        assume(abs(theta0 - kink) > 2e-3)
    spec = build_spec("triangular", {"mode": mode})
    numeric = centered_difference(lambda t: V_of(spec, t), theta0, 1e-4)
    assert V_prime(spec, theta0) == pytest.approx(numeric, abs=2e-5)


def test_V_rejects_cutoff_outside_support(uniform_spec):
    with pytest.raises(ValueError):
        V_of(uniform_spec, 1.5)


def test_build_scheme_pieces(triangular_spec, uniform_spec):
    scheme = build_scheme(triangular_spec, 0.25)
    assert scheme.kinds == [EXCLUSION, POOLING, REVEAL]
    assert scheme.standards == pytest.approx([0.5])
    assert scheme.boundaries == pytest.approx([0.0, 0.25, 0.5, 1.0])
    assert build_scheme(uniform_spec, 0.0).kinds == [REVEAL]
    assert build_scheme(uniform_spec, 0.7).kinds == [EXCLUSION, POOLING]


def test_oracle_agrees_with_uniform_optimum(uniform_spec):
    result = classify_regime(uniform_spec, oracle_grid_n=12)
    assert result.oracle_agreement is True
    assert result.oracle["dp_value"] <= result.value + 1e-6


@pytest.mark.slow
@settings(max_examples=20, deadline=None)
@given(mode=st.floats(0.2, 0.8))
def test_pool_contains_mode_of_unimodal_density(mode):
    spec = build_spec("triangular", {"mode": mode})
    scheme = build_scheme(spec, solve_cutoff(spec).theta0)
    pools = [seg for _, seg in scheme.pooling_segments()]
    assert len(pools) == 1
    assert pools[0].start <= mode <= pools[0].end


@pytest.mark.filterwarnings("error::scipy.integrate.IntegrationWarning")
def test_histogram_integrals_split_at_every_edge(two_standard_spec):
    for t in (0.5, 1.0, 2.5, 4.2):
        V_of(two_standard_spec, t)
    # bin masses 0.2, 1.5, 0.2, 1.5, 0.2 over 3.6 at midpoints 0.5 .. 4.5
    assert two_standard_spec.dist.mean() == pytest.approx(2.5, abs=1e-12)
