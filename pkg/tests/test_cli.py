import json
from pathlib import Path

import pandas as pd

from src.cli import build_parser, main

DATA = Path(__file__).resolve().parent.parent / "data_test"


def read_result(out_dir, command):
    return json.loads((out_dir / command / "result.json").read_text(encoding="utf-8"))


def test_parser_defaults():
    args = build_parser().parse_args(["--config", "problem.json"])
    assert args.command is None
    assert args.grid_n is None
    assert not args.quiet


def test_solve_writes_result_and_scheme(write_document, uniform_document, tmp_path):
    path = write_document(uniform_document)
    out = tmp_path / "out"
    assert main(["--config", str(path), "--out", str(out), "--command", "solve-deterministic", "--quiet"]) == 0
    result = read_result(out, "solve-deterministic")
    assert result["meta"]["command"] == "solve-deterministic"
    assert result["details"]["cutoff"]["theta0"] == 0.0
    assert result["details"]["regime"] == "fully-revealing"
    scheme = pd.read_csv(out / "solve-deterministic" / "scheme.csv")
    assert list(scheme.columns) == ["theta", "q", "segment_kind"]
    assert set(scheme["segment_kind"]) == {"reveal"}


def test_reruns_are_byte_identical(write_document, uniform_document, tmp_path):
    path = write_document(uniform_document)
    outputs = []
    for name in ("first", "second"):
        out = tmp_path / name
        assert main(["--config", str(path), "--out", str(out), "--command", "check-conditions", "--quiet"]) == 0
        folder = out / "check-conditions"
        outputs.append({p.name: p.read_bytes() for p in sorted(folder.iterdir())})
    assert outputs[0] == outputs[1]
    assert set(outputs[0]) == {"result.json", "conditions.csv", "scheme.csv"}


def test_given_cutoff(write_document, uniform_document, tmp_path):
    uniform_document["run"] = {"command": "solve-deterministic", "params": {"theta0": 0.25}}
    out = tmp_path / "out"
    assert main(["--config", str(write_document(uniform_document)), "--out", str(out), "--quiet"]) == 0
    result = read_result(out, "solve-deterministic")
    assert result["details"]["cutoff"]["status"] == "given"
    assert result["details"]["regime"] == "lower-censorship"
    assert result["summary"]["check:cutoff given"] == "pass"


def test_unknown_field_exits_with_config_error(write_document, uniform_document, tmp_path):
    uniform_document["distribution"]["shape"] = 2
    path = write_document(uniform_document)
    assert main(["--config", str(path), "--out", str(tmp_path), "--command", "classify", "--quiet"]) == 2
    assert not (tmp_path / "classify").exists()


def test_missing_config_exits_with_config_error(tmp_path):
    assert main(["--config", str(tmp_path / "absent.json"), "--command", "classify", "--quiet"]) == 2


def test_oversized_oracle_grid_exits_with_solver_error(write_document, uniform_document, tmp_path):
    path = write_document(uniform_document)
    code = main(["--config", str(path), "--out", str(tmp_path), "--command", "oracle-compare", "--grid-n", "25",
                 "--quiet"])
    assert code == 3


def test_running_example_audit_records_MPS_failure(tmp_path):
    out = tmp_path / "out"
    assert main(["--config", str(DATA / "running_example.json"), "--out", str(out), "--quiet"]) == 0
    result = read_result(out, "stochastic-audit")
    assert result["summary"]["check:MPS"] == "fail"
    assert result["summary"]["check:envelope"] == "pass"
    assert result["details"]["source"] == "file"
    assert result["details"]["feasibility"]["first_violation_theta"] > 1.0
    allocation = pd.read_csv(out / "stochastic-audit" / "allocation.csv")
    assert list(allocation.columns) == ["theta", "q", "w", "D"]
    assert len(allocation) == 401


def test_fee_design_command(tmp_path):
    out = tmp_path / "out"
    assert main(["--config", str(DATA / "fee_design.json"), "--out", str(out), "--quiet"]) == 0
    result = read_result(out, "fee-design")
    assert result["summary"]["check:w*' < 1"] == "pass"
    assert result["details"]["fee_design"]["rho"] == 0.9


def test_cutoff_outside_support_exits_with_config_error(write_document, uniform_document, tmp_path):
    uniform_document["run"] = {"command": "solve-deterministic", "params": {"theta0": 5}}
    path = write_document(uniform_document)
    assert main(["--config", str(path), "--out", str(tmp_path / "out"), "--quiet"]) == 2
    assert not (tmp_path / "out" / "solve-deterministic").exists()
