"""End-to-end tests of the flowtopo command line."""

import json

import pytest
from click.testing import CliRunner

from app.main import cli
from app.repositories.run_repository import read_summary, read_table


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def config_file(tmp_path):
    """Write a run configuration and return its path as a string."""

    def write(payload):
        path = tmp_path / "run.json"
        path.write_text(json.dumps(payload), encoding="utf-8")
        return str(path)

    return write


SMALL_SOLVE = {"mesh": {"nx": 4, "ny": 4}, "continuation": {"eps0": 0.5}}


# ---------------------------------------------------------------------------
# Usage errors
# ---------------------------------------------------------------------------


def test_unknown_mode_exits_with_usage(runner, config_file):
    result = runner.invoke(cli, ["melt", "--config", config_file({})])

    assert result.exit_code == 2


def test_missing_config_exits_with_usage(runner, tmp_path):
    result = runner.invoke(cli, ["solve", "--config", str(tmp_path / "absent.json")])

    assert result.exit_code == 2
    assert "config file not found" in result.output


def test_schema_violation_exits_with_usage(runner, config_file):
    result = runner.invoke(cli, ["solve", "--config", config_file({"physics": {"beta": 2.0}})])

    assert result.exit_code == 2
    assert "beta" in result.output


# ---------------------------------------------------------------------------
# Modes
# ---------------------------------------------------------------------------


def test_solve_writes_artifacts(runner, config_file, tmp_path):
    out = tmp_path / "solve"
    result = runner.invoke(cli, ["solve", "--config", config_file(SMALL_SOLVE), "--out", str(out)])

    assert result.exit_code == 0, result.output
    summary = read_summary(out)
    assert summary["mode"] == "solve"
    assert summary["margin_class"] in ("m<1/2", "m<1", "uncertified")
    assert summary["energy_lhs"] == pytest.approx(summary["energy_rhs"], rel=1e-4)
    assert read_table(out / "residuals.csv")
    assert (out / "state.vtk").exists()
    history = read_table(out / "history.csv")
    assert len(history) == 1
    assert history[0]["iteration"] == "0"
    assert float(history[0]["j_total"]) == pytest.approx(summary["objective"]["total"])
    assert json.loads((out / "config.json").read_text())["mesh"]["nx"] == 4


def test_solve_is_deterministic(runner, config_file, tmp_path):
    path = config_file(SMALL_SOLVE)
    for name in ("first", "second"):
        result = runner.invoke(cli, ["solve", "--config", path, "--out", str(tmp_path / name)])
        assert result.exit_code == 0, result.output

    for artifact in ("summary.json", "residuals.csv", "state.vtk"):
        assert (tmp_path / "first" / artifact).read_bytes() == (tmp_path / "second" / artifact).read_bytes()


def test_gamma_check_mode(runner, config_file, tmp_path):
    payload = {"mesh": {"nx": 8, "ny": 8}, "continuation": {"eps0": 0.1}, "verification": {"gamma_levels": 2}}
    out = tmp_path / "gamma"

    result = runner.invoke(cli, ["gamma-check", "--config", config_file(payload), "--out", str(out)])

    assert result.exit_code == 0, result.output
    rows = read_table(out / "gamma_check.csv")
    assert len(rows) == 2
    assert float(rows[1]["relative_error"]) <= float(rows[0]["relative_error"])
    assert len(read_table(out / "history.csv")) == 2
    profile = (out / "profile.vtk").read_text()
    assert "POINT_DATA 289" in profile
    assert "phase" in profile


def test_failed_gate_exits_numerical_and_records_error(runner, config_file, tmp_path):
    payload = {
        "mesh": {"nx": 32, "ny": 32},
        "continuation": {"eps0": 0.1},
        "verification": {"gamma_levels": 1, "gamma_tolerance": 1e-12},
    }
    out = tmp_path / "strict"

    result = runner.invoke(cli, ["gamma-check", "--config", config_file(payload), "--out", str(out)])

    assert result.exit_code == 1
    error = json.loads((out / "error.json").read_text())
    assert error["error_type"] == "VerificationFailedError"
    assert error["mode"] == "gamma-check"
    assert (out / "gamma_check.csv").exists()
