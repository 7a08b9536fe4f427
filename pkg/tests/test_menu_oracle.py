import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.core.costs import build_cost
from src.core.scheme import EXCLUSION, POOLING, REVEAL, DeterministicScheme, Segment
from src.exceptions import ConfigValidationError, GridTooLargeError
from src.processors.censorship_solver import build_scheme
from src.processors.menu_oracle import (GridSpec, Menu, additive_cost_constants, additive_cutoff_check,
                                        anchored_quality_grid, best_response, brute_force_menus, classification_grid,
                                        compare_oracles, dp_optimal_menu, envelope, ic_audit, menu_payoff,
                                        project_scheme, scheme_from_menu, threshold)
from tests.conftest import build_spec

TWO_STANDARDS = DeterministicScheme(segments=(Segment(0.0, 1.0, EXCLUSION), Segment(1.0, 3.0, POOLING, 2.0),
                                              Segment(3.0, 4.0, POOLING, 4.0), Segment(4.0, 5.0, REVEAL)),
                                    cutoff=1.0)


def test_best_response_ties_go_up():
    cost = build_cost("power", {"p": 2})
    assert best_response(cost, Menu((2.0, 4.0)), 3.0) == 4.0
    assert best_response(cost, Menu((2.0, 4.0)), 0.5) == 0.0
    assert best_response(cost, [2.0, 4.0], 2.5) == 2.0


def test_threshold_and_envelope():
    cost = build_cost("power", {"p": 2})
    assert threshold(cost, 0.0, 2.0) == pytest.approx(1.0)
    assert threshold(cost, 2.0, 4.0) == pytest.approx(3.0)
    # 1.0 enters at 0.5 but 1.1 takes over at 1.05, before 4.0 at 2.55
    chain, entries = envelope(cost, [1.0, 1.1, 4.0])
    assert chain == [0, 1, 2]
    assert entries == pytest.approx([0.5, 1.05, 2.55])


def test_menu_validation():
    with pytest.raises(ConfigValidationError):
        Menu((2.0, 1.0))
    with pytest.raises(ConfigValidationError):
        Menu((0.0, 1.0))


def test_menu_payoff_of_pass_fail_standard(uniform_spec):
    # one standard q = 1 taken by types above 1/2 on U[0, 1]
    assert menu_payoff(uniform_spec, Menu((1.0,))) == pytest.approx(0.5, abs=1e-12)
    assert menu_payoff(uniform_spec, Menu(())) == 0.0


def test_oracles_agree_on_two_standard_density(two_standard_spec):
    grid = GridSpec(quality=(0.5, 1.0, 2.0, 3.0, 4.0, 5.0))
    comparison = compare_oracles(two_standard_spec, grid)
    assert comparison["agree"]
    assert comparison["brute_value"] == pytest.approx(comparison["dp_value"], abs=1e-12)


def test_zero_gain_items_are_dropped_by_both_oracles(uniform_spec):
    # psi = q on U[0, 1]: every menu whose top item is 1 is worth 1/2, so the tie-break decides
    grid = GridSpec(quality=(0.002, 0.304, 0.57, 1.0))
    comparison = compare_oracles(uniform_spec, grid)
    assert comparison["agree"]
    assert comparison["brute"]["menu"] == [1.0]
    assert comparison["dp"]["menu"] == [1.0]
    assert comparison["dp_value"] == pytest.approx(0.5, abs=1e-12)


@pytest.mark.slow
@settings(max_examples=50, deadline=None)
@given(heights=st.lists(st.floats(0.1, 2.0), min_size=5, max_size=5), n=st.integers(2, 12))
def test_dp_matches_brute_force_on_histograms(heights, n):
    spec = build_spec("histogram", {"edges": list(np.linspace(0.0, 2.0, 6)), "heights": heights},
                      support=(0.0, 2.0))
    grid = anchored_quality_grid(spec, n)
    brute = brute_force_menus(spec, grid)
    dp = dp_optimal_menu(spec, grid)
    assert dp.value == pytest.approx(brute.value, abs=1e-9)
    assert dp.menu == brute.menu


@pytest.mark.slow
@settings(max_examples=20, deadline=None)
@given(mode=st.floats(0.0, 1.0), n=st.integers(2, 12))
def test_dp_matches_brute_force_on_triangular(mode, n):
    spec = build_spec("triangular", {"mode": mode})
    grid = anchored_quality_grid(spec, n)
    brute = brute_force_menus(spec, grid)
    dp = dp_optimal_menu(spec, grid)
    assert dp.value == pytest.approx(brute.value, abs=1e-9)
    assert dp.menu == brute.menu


def test_brute_force_refuses_large_grid():
    spec = build_spec(bruteforce_max=4)
    with pytest.raises(GridTooLargeError):
        brute_force_menus(spec, GridSpec(quality=(0.2, 0.4, 0.6, 0.8, 1.0)))


def test_anchored_grid_keeps_anchors(triangular_spec):
    grid = anchored_quality_grid(triangular_spec, 12, [0.25])
    assert len(grid.quality) == 12
    assert min(abs(q - 1.0) for q in grid.quality) < 1e-9
    assert min(abs(q - 0.5) for q in grid.quality) < 1e-9
    with pytest.raises(ConfigValidationError):
        anchored_quality_grid(triangular_spec, 0)


def test_ic_audit_accepts_two_standards(two_standard_spec):
    report = ic_audit(two_standard_spec, TWO_STANDARDS)
    assert report.holds, report.to_dict()
    assert {r.id for r in report.sub_reports} >= {"IC-alternation", "IC-jump-indifference"}


def test_ic_audit_flags_unequal_jump(two_standard_spec):
    bad = DeterministicScheme(segments=(Segment(0.0, 1.0, EXCLUSION), Segment(1.0, 3.0, POOLING, 2.0),
                                        Segment(3.0, 5.0, POOLING, 5.0)), cutoff=1.0)
    report = ic_audit(two_standard_spec, bad)
    assert not report.holds
    assert not report.sub("IC-jump-indifference").holds
    assert report.details["residuals"]["jump_indifference"] == pytest.approx(1.5)


def test_ic_audit_reports_malformed_scheme(uniform_spec):
    broken = DeterministicScheme(segments=(Segment(0.0, 0.4, REVEAL), Segment(0.5, 1.0, REVEAL)))
    report = ic_audit(uniform_spec, broken)
    assert not report.holds
    assert "gap" in report.note


def test_classification_grid_holds_breakpoint_standards(two_standard_spec):
    grid = classification_grid(two_standard_spec, 12)
    # q_i(1) = 2 and q_f(4) = 4 under c = q^2/2
    for standard in (2.0, 4.0, 5.0):
        assert min(abs(q - standard) for q in grid.quality) < 1e-8
    assert all(b > a for a, b in zip(grid.quality, grid.quality[1:]))


def test_scheme_from_menu(two_standard_spec):
    scheme = scheme_from_menu(two_standard_spec, Menu((2.0, 4.0)))
    assert scheme.kinds == [EXCLUSION, POOLING, POOLING]
    assert scheme.standards == [2.0, 4.0]
    assert scheme.boundaries == pytest.approx([0.0, 1.0, 3.0, 5.0])
    assert ic_audit(two_standard_spec, scheme).holds
    assert scheme_from_menu(two_standard_spec, Menu(())).kinds == [EXCLUSION]


def test_projection_never_beats_optimum(triangular_spec):
    scheme = build_scheme(triangular_spec, (8 + np.sqrt(8)) / 28)
    projection = project_scheme(triangular_spec, scheme)
    assert projection.loss >= -1e-9
    assert projection.resolution > 0
    assert projection.scheme_value >= projection.menu_value - 1e-9


def test_additive_cost_constants():
    assert additive_cost_constants(build_cost("power", {"p": 2})) == pytest.approx((1.0, 2.0), abs=1e-9)
    assert additive_cost_constants(build_cost("scaled-power", {"p": 2, "scale": 2.0})) == pytest.approx(
        (0.5, 1.0), abs=1e-9)


def test_additive_cutoff_check(uniform_spec, increasing_spec):
    report = additive_cutoff_check(uniform_spec, 0.5)
    assert report.holds
    assert report.margin == pytest.approx(1.0)
    # f = 2 theta: window mass 1 exceeds 2 f(0.1) = 0.4
    assert not additive_cutoff_check(increasing_spec, 0.1).holds
