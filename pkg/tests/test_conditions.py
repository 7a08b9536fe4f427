import numpy as np
import pytest

from src.core.characteristic import make_context
from src.core.scheme import EXCLUSION, POOLING, REVEAL, DeterministicScheme, Segment, scheme_jumps
from src.processors.censorship_solver import build_scheme
from src.processors.conditions import (QUASI_DECREASING, QUASI_INCREASING, QUASI_UNIMODAL, check_AB, check_C,
                                       check_N1, check_N2, check_no_exclusion, check_S, check_Sj_Cj,
                                       classify_quasi, jump_multiplier)
from src.processors.stochastic import elasticity
from tests.conftest import build_spec

TRIANGULAR_CUTOFF = (8 + np.sqrt(8)) / 28


def test_uniform_full_revelation_conditions_hold(uniform_spec):
    ctx = make_context(uniform_spec, 0.0)
    s_report, c_report = check_S(ctx), check_C(ctx)
    assert s_report.holds
    assert s_report.details["A"] == pytest.approx(1.0)
    assert c_report.holds


def test_increasing_density_fails_C_at_zero(increasing_spec):
    report = check_C(make_context(increasing_spec, 0.0))
    assert not report.holds
    assert report.margin < 0
    assert 0.0 <= report.witness <= 1.0


def test_decreasing_density_holds_at_zero(decreasing_spec):
    ctx = make_context(decreasing_spec, 0.0)
    assert check_S(ctx).holds
    assert check_C(ctx).holds


def test_triangular_optimum_satisfies_S_and_C(triangular_spec):
    ctx = make_context(triangular_spec, TRIANGULAR_CUTOFF)
    s_report, c_report = check_S(ctx), check_C(ctx)
    assert s_report.holds, s_report.to_dict()
    assert c_report.holds
    assert {r.id for r in s_report.sub_reports} == {"S1", "S2"}


def test_S_fails_away_from_optimum(triangular_spec):
    # pooling range reaches far down the decreasing side
    ctx = make_context(triangular_spec, 0.45)
    assert not check_S(ctx).holds


def test_report_serialises(triangular_spec):
    report = check_S(make_context(triangular_spec, TRIANGULAR_CUTOFF))
    out = report.to_dict()
    assert out["id"] == "S"
    assert out["cutoff"] == pytest.approx(TRIANGULAR_CUTOFF)
    assert [r["id"] for r in out["sub_reports"]] == ["S1", "S2"]


def test_no_exclusion_sufficient_condition(decreasing_spec, increasing_spec):
    assert check_no_exclusion(decreasing_spec).holds
    assert not check_no_exclusion(increasing_spec).holds


def test_quasi_labels(decreasing_spec, increasing_spec, triangular_spec):
    assert classify_quasi(decreasing_spec).label == QUASI_DECREASING
    assert QUASI_INCREASING in classify_quasi(increasing_spec).labels
    triangular = classify_quasi(triangular_spec)
    assert QUASI_UNIMODAL in triangular.labels
    assert triangular.witnesses[QUASI_UNIMODAL] == pytest.approx(TRIANGULAR_CUTOFF, abs=1e-3)


def test_AB_gap_on_increasing_density(increasing_spec):
    theta0 = 1 / np.sqrt(3)
    ab_i, ab_ii = check_AB(increasing_spec, theta0)
    s1 = check_S(make_context(increasing_spec, theta0)).sub("S1")
    assert s1.holds
    assert not ab_i.holds
    assert ab_i.details["implication_gap"]
    assert ab_ii.holds


def test_AB_agrees_with_S1_inside_support(triangular_spec):
    ab_i, _ = check_AB(triangular_spec, TRIANGULAR_CUTOFF)
    s1 = check_S(make_context(triangular_spec, TRIANGULAR_CUTOFF)).sub("S1")
    assert ab_i.margin == pytest.approx(s1.margin, abs=1e-8)
    assert ab_i.details["A_AB"] == pytest.approx(ab_i.details["A"], abs=1e-8)


def test_Sj_Cj_on_lower_censorship(triangular_spec):
    scheme = build_scheme(triangular_spec, TRIANGULAR_CUTOFF)
    reports = check_Sj_Cj(triangular_spec, scheme)
    assert [r.id for r in reports] == ["S-j", "C-j"]
    assert all(r.holds for r in reports), [r.to_dict() for r in reports]


def test_Sj_Cj_rejects_IC_violation(two_standard_spec):
    bad = DeterministicScheme(segments=(Segment(0.0, 1.0, EXCLUSION), Segment(1.0, 3.0, POOLING, 2.0),
                                        Segment(3.0, 5.0, POOLING, 5.0)))
    with pytest.raises(Exception) as info:
        check_Sj_Cj(two_standard_spec, bad)
    assert "residual" in str(info.value)


def test_two_standard_scheme_has_one_report_per_jump(two_standard_spec):
    scheme = DeterministicScheme(segments=(Segment(0.0, 1.0, EXCLUSION), Segment(1.0, 3.0, POOLING, 2.0),
                                           Segment(3.0, 4.0, POOLING, 4.0), Segment(4.0, 5.0, REVEAL)))
    reports = check_Sj_Cj(two_standard_spec, scheme)
    assert [r.id for r in reports] == ["S-j", "S-j", "C-j"]
    assert [r.cutoff for r in reports[:2]] == [1.0, 3.0]


def test_interior_jump_multiplier(two_standard_spec):
    scheme = DeterministicScheme(segments=(Segment(0.0, 1.0, EXCLUSION), Segment(1.0, 3.0, POOLING, 2.0),
                                           Segment(3.0, 4.0, POOLING, 4.0), Segment(4.0, 5.0, REVEAL)))
    interior = [j for j in scheme_jumps(two_standard_spec, scheme) if not j.participation]
    assert [j.theta for j in interior] == [3.0]
    # psi = q: r_j = f, so A_j is the mass on [3, c'(4)] = [3, 4]
    A_j = jump_multiplier(two_standard_spec, scheme, interior[0])
    assert A_j == pytest.approx(1.5 / 3.6, abs=1e-9)
    reports = check_Sj_Cj(two_standard_spec, scheme)
    assert reports[1].details["A_j"] == pytest.approx(A_j, abs=1e-12)


def test_pareto_elasticity_and_N1():
    spec = build_spec("truncated-pareto", {"alpha": 2.0}, support=(1.0, 4.0))
    grid = np.linspace(1.0, 4.0, 31)
    np.testing.assert_allclose(elasticity(spec.dist, grid), -3.0, atol=1e-9)
    assert check_N1(spec, (1.0, 4.0)).holds


def test_N1_fails_with_increasing_elasticity():
    spec = build_spec("polynomial", {"coefficients": [1.0, 0.0, 1.0]})
    report = check_N1(spec, (0.0, 1.0))
    assert not report.holds


def test_N2_relaxed_form_is_tagged(uniform_spec):
    report = check_N2(uniform_spec, 0.0, (0.0, 0.5), relaxed=True)
    assert report.note == "footnote"
    assert report.holds


def test_N2_strict_form_fails_on_falling_density():
    spec = build_spec("histogram", {"edges": [1.0, 1.5, 2.0, 3.0], "heights": [0.8, 0.6, 0.3]}, support=(1.0, 3.0))
    strict = check_N2(spec, 1.0, (1.0, 2.0))
    assert not strict.holds
    assert strict.margin < 0
    assert strict.note == ""
    # kappa = 0 for psi = q, so the relaxed form is flat
    assert check_N2(spec, 1.0, (1.0, 2.0), relaxed=True).holds
