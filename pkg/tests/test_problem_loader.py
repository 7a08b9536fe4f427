import json

import numpy as np
import pytest

from src.connectors.problem_loader import ProblemLoader, RunConfig, load_allocation_csv, load_scheme_csv
from src.core.scheme import EXCLUSION, POOLING, REVEAL, DeterministicScheme, Segment
from src.exceptions import ConfigValidationError, DownwardBiasViolation
from src.processors.menu_oracle import ic_audit
from src.utils.table_export import TableExporter, allocation_frame


def test_parse_reads_exact_decimals():
    document = ProblemLoader.parse('{"support": {"theta_lo": 0.1, "theta_hi": 0.30000000000000004}}')
    assert document["support"]["theta_lo"] == 0.1
    assert isinstance(document["support"]["theta_hi"], float)
    assert document["support"]["theta_hi"] == 0.30000000000000004


def test_parse_rejects_bad_json():
    with pytest.raises(ConfigValidationError):
        ProblemLoader.parse("{not json")
    with pytest.raises(ConfigValidationError):
        ProblemLoader.parse("[1, 2]")


def test_build_problem(uniform_document):
    spec = ProblemLoader().build_problem(uniform_document)
    assert spec.theta_hi == 1.0
    assert spec.dist.family == "uniform"
    assert spec.audit is True


def test_unknown_field_is_rejected(uniform_document):
    uniform_document["colour"] = "blue"
    with pytest.raises(ConfigValidationError) as info:
        ProblemLoader().build_problem(uniform_document)
    assert info.value.field == "config"
    assert info.value.exit_code == 2


def test_unknown_numerics_override(uniform_document):
    uniform_document["numerics"] = {"tol_cond": 1e-6, "speed": 3}
    with pytest.raises(ConfigValidationError) as info:
        ProblemLoader().build_problem(uniform_document)
    assert info.value.field == "numerics"


def test_numerics_override_applies(uniform_document):
    uniform_document["numerics"] = {"condition_grid": 101}
    assert ProblemLoader().build_problem(uniform_document).numerics.condition_grid == 101


def test_downward_bias_is_audited(uniform_document):
    uniform_document["support"]["theta_hi"] = 2
    uniform_document["objective"] = {"family": "quadratic-loss", "params": {"b0": 1}}
    with pytest.raises(DownwardBiasViolation):
        ProblemLoader().build_problem(uniform_document)
    uniform_document["audit"] = False
    assert ProblemLoader().build_problem(uniform_document).audit is False


def test_missing_file(tmp_path):
    with pytest.raises(ConfigValidationError):
        ProblemLoader().load(tmp_path / "absent.json")


def test_run_section_and_overrides(write_document, uniform_document, tmp_path):
    uniform_document["run"] = {"command": "classify", "params": {"oracle_grid_n": 12}}
    path = write_document(uniform_document)
    config = ProblemLoader().load(path, out_dir=tmp_path / "out")
    assert config.command == "classify"
    assert config.params == {"oracle_grid_n": 12}
    assert config.source == path

    with pytest.raises(ConfigValidationError):
        # classify's parameters do not apply to fee-design
        ProblemLoader().load(path, command="fee-design")


def test_unknown_command(uniform_document):
    spec = ProblemLoader().build_problem(uniform_document)
    with pytest.raises(ConfigValidationError) as info:
        RunConfig(problem=spec, command="optimise")
    assert info.value.field == "command"


def test_no_command(write_document, uniform_document):
    with pytest.raises(ConfigValidationError):
        ProblemLoader().load(write_document(uniform_document))


def test_csv_paths_resolve_against_document(write_document, uniform_document, tmp_path):
    theta = np.linspace(0.0, 1.0, 5)
    TableExporter(tmp_path).write(allocation_frame(theta, theta, theta, np.zeros(5)), "alloc")
    uniform_document["run"] = {"command": "stochastic-audit", "params": {"allocation_csv": "alloc.csv"}}
    config = ProblemLoader().load(write_document(uniform_document))
    assert config.params["allocation_csv"] == str(tmp_path / "alloc.csv")


def test_missing_csv_is_rejected(write_document, uniform_document):
    uniform_document["run"] = {"command": "stochastic-audit", "params": {"allocation_csv": "absent.csv"}}
    with pytest.raises(ConfigValidationError):
        ProblemLoader().load(write_document(uniform_document))


def test_scheme_table_round_trip(two_standard_spec, tmp_path):
    scheme = DeterministicScheme(segments=(Segment(0.0, 1.0, EXCLUSION), Segment(1.0, 3.0, POOLING, 2.0),
                                           Segment(3.0, 4.0, POOLING, 4.0), Segment(4.0, 5.0, REVEAL)),
                                 cutoff=1.0)
    path = TableExporter(tmp_path).scheme(two_standard_spec, scheme)
    loaded = load_scheme_csv(path)
    assert loaded.segments == scheme.segments
    assert loaded.cutoff == 1.0
    assert ic_audit(two_standard_spec, loaded).holds


def test_scheme_table_rejects_unknown_kind(tmp_path):
    path = tmp_path / "scheme.csv"
    path.write_text("theta,q,segment_kind\n0,0,exclusion\n0.5,1,bunching\n1,1,bunching\n", encoding="utf-8")
    with pytest.raises(ConfigValidationError):
        load_scheme_csv(path)


def test_allocation_table(tmp_path):
    theta = np.linspace(1.0, 5.0, 9)
    TableExporter(tmp_path).write(allocation_frame(theta, 0.4 * theta ** 2, 0.1 * theta ** 3, np.zeros(9)),
                                  "allocation")
    allocation = load_allocation_csv(tmp_path / "allocation.csv", U_bar=0.5)
    np.testing.assert_array_equal(allocation.theta, theta)
    np.testing.assert_array_equal(allocation.q, 0.4 * theta ** 2)
    assert allocation.U_bar == 0.5


def test_allocation_table_needs_columns(tmp_path):
    path = tmp_path / "allocation.csv"
    path.write_text(json.dumps({"theta": [0, 1]}), encoding="utf-8")
    with pytest.raises(ConfigValidationError):
        load_allocation_csv(path)


@pytest.mark.parametrize("command, params, field", [
    ("solve-deterministic", {"theta0": 5.0}, "run.params.theta0"),
    ("solve-deterministic", {"theta0": "0.5"}, "run.params.theta0"),
    ("fee-design", {"rho": 0.0}, "run.params.rho"),
    ("fee-design", {"rho": 1.5}, "run.params.rho"),
    ("classify", {"oracle_grid_n": 0}, "run.params.oracle_grid_n"),
    ("oracle-compare", {"quality": [0.5, -1.0]}, "run.params.quality"),
    ("oracle-compare", {"cutoffs": []}, "run.params.cutoffs"),
    ("stochastic-audit", {"fee_mode": "cartel"}, "run.params.fee_mode"),
    ("stochastic-audit", {"fee_alpha": 0}, "run.params.fee_alpha"),
    ("signaling", {"theta_L": -0.5}, "run.params.theta_L"),
    ("signaling", {"additive": "yes"}, "run.params.additive"),
])
def test_run_params_are_range_checked(uniform_document, command, params, field):
    spec = ProblemLoader().build_problem(uniform_document)
    with pytest.raises(ConfigValidationError) as info:
        RunConfig(problem=spec, command=command, params=params)
    assert info.value.field == field
    assert info.value.exit_code == 2


def test_run_params_in_range_pass(uniform_document):
    spec = ProblemLoader().build_problem(uniform_document)
    RunConfig(problem=spec, command="solve-deterministic", params={"theta0": 1})
    RunConfig(problem=spec, command="fee-design", params={"rho": 1.0})
    RunConfig(problem=spec, command="stochastic-audit", params={"fee_mode": "regulator", "fee_alpha": 0.5,
                                                                "fee_thetas": [0.2, 0.8]})
