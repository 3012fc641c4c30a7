"""
End-to-end tests for the command line
"""

import sys
import os
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

import json
import shutil

import pandas as pd
import pytest
from click.testing import CliRunner

from app import EXIT_CONFIG, EXIT_FAILED, EXIT_OK, cli
from fixedpoint.scenario import BUNDLED_SCENARIOS

SCENARIO_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "scenarios")


def scenario_file(name):
    return os.path.join(SCENARIO_DIR, f"{name}.json")


def problem_file(name):
    return os.path.join(SCENARIO_DIR, "problems", f"{name}.json")


@pytest.fixture
def runner(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("FIXEDPOINT_LOG_FILE", "")
    return CliRunner()


def edited_scenario(tmp_path, name, edit):
    with open(scenario_file(name)) as f:
        document = json.load(f)
    edit(document)
    path = tmp_path / f"{name}_edited.json"
    path.write_text(json.dumps(document))
    return str(path)


def test_verify_example_passes(runner):
    result = runner.invoke(cli, ["verify", scenario_file("example_3_2")])
    assert result.exit_code == EXIT_OK, result.output
    with open(os.path.join("outputs", "example_3_2_verify_summary.json")) as f:
        summary = json.load(f)
    assert summary["passed"]
    assert len(summary["certificates"]) == 2


def test_verify_fails_for_identity_coefficient(runner, tmp_path):
    def identity_certificate(document):
        document["certificates"] = [{"family": "banach", "B": {"scalar": 1, "dim": 2}}]
    path = edited_scenario(tmp_path, "example_3_2", identity_certificate)
    result = runner.invoke(cli, ["verify", path])
    assert result.exit_code == EXIT_FAILED


def test_verify_fails_when_kannan_coefficient_is_too_small(runner, tmp_path):
    def smaller(document):
        document["certificates"][0]["B"]["scalar"] = "1/53"
    path = edited_scenario(tmp_path, "example_3_6", smaller)
    assert runner.invoke(cli, ["verify", path]).exit_code == EXIT_FAILED
    assert runner.invoke(cli, ["solve", path]).exit_code == EXIT_FAILED


def test_malformed_scenarios_are_configuration_errors(runner, tmp_path):
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    assert runner.invoke(cli, ["verify", str(broken)]).exit_code == EXIT_CONFIG

    def unknown_field(document):
        document["colour"] = "blue"
    assert runner.invoke(cli, ["verify", edited_scenario(tmp_path, "example_3_2", unknown_field)]).exit_code == EXIT_CONFIG

    def missing_mapping(document):
        del document["mapping"]
    assert runner.invoke(cli, ["verify", edited_scenario(tmp_path, "remark_3_3", missing_mapping)]).exit_code == EXIT_CONFIG

    def violating_table(document):
        document["space"] = {"kind": "custom_table", "points": [0, 1, 2], "table": [[0, 10, 1], [10, 0, 1], [1, 1, 0]]}
    assert runner.invoke(cli, ["verify", edited_scenario(tmp_path, "example_3_2", violating_table)]).exit_code == EXIT_CONFIG

    missing = str(tmp_path / "nowhere.json")
    assert runner.invoke(cli, ["solve", missing]).exit_code == EXIT_CONFIG


def test_corrupt_config_file_exits_with_configuration_error(runner, tmp_path):
    config = tmp_path / "bad.json"
    config.write_text("[1, 2")
    result = runner.invoke(cli, ["--config", str(config), "verify", scenario_file("example_3_2")])
    assert result.exit_code == EXIT_CONFIG


def test_solve_writes_trace_and_summary(runner):
    result = runner.invoke(cli, ["solve", scenario_file("example_3_2")])
    assert result.exit_code == EXIT_OK, result.output

    trace_path = os.path.join("outputs", "example_3_2_seed1.csv")
    with open(trace_path) as f:
        assert f.readline().strip() == "n,step_norm,apriori_bound"
    trace = pd.read_csv(trace_path)
    assert list(trace["n"]) == list(range(len(trace)))

    with open(os.path.join("outputs", "example_3_2_summary.json")) as f:
        summary = json.load(f)
    assert len(summary["seeds"]) == 3
    for seed in summary["seeds"]:
        assert seed["common_fixed_point"] == pytest.approx(0.0, abs=1e-6)


def test_solve_reports_absent_common_fixed_point(runner):
    result = runner.invoke(cli, ["solve", scenario_file("remark_3_3")])
    assert result.exit_code == EXIT_OK, result.output
    with open(os.path.join("outputs", "remark_3_3_summary.json")) as f:
        seed = json.load(f)["seeds"][0]
    assert seed["point_of_coincidence"] == pytest.approx(1.0)
    assert seed["coincidence_point"] == pytest.approx(3.0)
    assert seed["common_fixed_point"] is None
    assert seed["weakly_compatible"] is False


def test_solve_jsonl_and_output_directory(runner, tmp_path):
    out = tmp_path / "reports"
    result = runner.invoke(cli, ["solve", scenario_file("stein_demo"), "--format", "jsonl", "--out", str(out)])
    assert result.exit_code == EXIT_OK, result.output
    lines = (out / "stein_demo_seed0.jsonl").read_text().strip().splitlines()
    assert lines
    assert set(json.loads(lines[0])) == {"n", "step_norm", "apriori_bound"}


def test_bundled_examples_pass(runner):
    result = runner.invoke(cli, ["paper-examples", "--scenario-dir", SCENARIO_DIR])
    assert result.exit_code == EXIT_OK, result.output
    for name in BUNDLED_SCENARIOS:
        assert os.path.exists(os.path.join("outputs", f"{name}_verify_summary.json"))


def test_bundled_examples_fail_on_a_broken_scenario(runner, tmp_path):
    directory = tmp_path / "scenarios"
    directory.mkdir()
    for name in BUNDLED_SCENARIOS:
        shutil.copy(scenario_file(name), directory / f"{name}.json")
    document = json.loads((directory / "example_3_6.json").read_text())
    document["certificates"][0]["B"]["scalar"] = "1/53"
    (directory / "example_3_6.json").write_text(json.dumps(document))

    result = runner.invoke(cli, ["paper-examples", "--scenario-dir", str(directory)])
    assert result.exit_code == EXIT_FAILED


def test_bundled_examples_need_every_scenario(runner, tmp_path):
    result = runner.invoke(cli, ["paper-examples", "--scenario-dir", str(tmp_path / "empty")])
    assert result.exit_code == EXIT_CONFIG


@pytest.mark.parametrize("name", ["stein_small", "integral_product"])
def test_oracle_agrees_with_direct_solver(runner, name):
    result = runner.invoke(cli, ["oracle", problem_file(name)])
    assert result.exit_code == EXIT_OK, result.output
    with open(os.path.join("outputs", f"{name}_oracle_summary.json")) as f:
        summary = json.load(f)
    assert summary["oracle_delta"] < 1e-8


def test_oracle_rejects_nonlinear_kernel(runner, tmp_path):
    problem = tmp_path / "nonlinear.json"
    problem.write_text(json.dumps({
        "kind": "integral", "m": 16, "p": 1, "beta": 0.3,
        "kernel": {"name": "custom", "phi": "ones", "nonlinearity": "tanh"},
        "g": 1.0,
    }))
    assert runner.invoke(cli, ["oracle", str(problem)]).exit_code == EXIT_CONFIG
