"""Tests for run directory persistence."""

import numpy as np
import pytest

from app.core.config import settings
from app.models.objective import SharpMask
from app.models.run_config import RunConfig
from app.models.shape import GradientCheckRow
from app.repositories.run_repository import (
    ERROR_FILE,
    prepare_run_dir,
    read_summary,
    read_table,
    resolve_run_dir,
    write_error,
    write_sharp_mask,
    write_summary,
    write_table,
)


# ---------------------------------------------------------------------------
# Directory resolution
# ---------------------------------------------------------------------------


def test_override_beats_config_beats_settings(tmp_path, monkeypatch):
    monkeypatch.setattr(settings, "OUTPUT_DIR", str(tmp_path / "runs"))
    config = RunConfig.model_validate({"mode": "optimize"})
    pinned = RunConfig.model_validate({"output_dir": "pinned"})

    assert resolve_run_dir(config) == tmp_path / "runs" / "optimize"
    assert str(resolve_run_dir(pinned)) == "pinned"
    assert str(resolve_run_dir(pinned, "cli")) == "cli"


def test_prepare_removes_stale_error(tmp_path):
    run_dir = tmp_path / "run"
    prepare_run_dir(run_dir)
    write_error(run_dir, "solve", RuntimeError("boom"))

    prepare_run_dir(run_dir)

    assert not (run_dir / ERROR_FILE).exists()


# ---------------------------------------------------------------------------
# Writers
# ---------------------------------------------------------------------------


def test_table_from_models(tmp_path):
    rows = [
        GradientCheckRow(direction=0, step=1e-2, derivative=1.5, finite_difference=1.5, relative_error=0.0),
        GradientCheckRow(direction=1, step=1e-3, derivative=2.0, finite_difference=2.5, relative_error=0.25),
    ]
    records = read_table(write_table(tmp_path / "gradient_check.csv", rows))

    assert list(records[0]) == ["direction", "step", "derivative", "finite_difference", "relative_error"]
    assert records[1]["relative_error"] == "0.25"
    assert float(records[0]["step"]) == pytest.approx(1e-2)


def test_empty_table_is_an_empty_file(tmp_path):
    path = write_table(tmp_path / "empty.csv", [])

    assert path.read_text(encoding="utf-8") == ""


def test_missing_values_become_blank(tmp_path):
    records = read_table(write_table(tmp_path / "t.csv", [{"a": 1, "b": None}]))

    assert records == [{"a": "1", "b": ""}]


def test_summary_is_deterministic(tmp_path):
    summary = {"z": np.float64(0.1), "a": [np.int64(1), 2], "nested": {"k": np.arange(2)}}

    first = write_summary(tmp_path, summary).read_bytes()
    second = write_summary(tmp_path, dict(reversed(list(summary.items())))).read_bytes()

    assert first == second
    assert read_summary(tmp_path) == {"a": [1, 2], "nested": {"k": [0, 1]}, "z": 0.1}


def test_read_summary_of_empty_directory(tmp_path):
    assert read_summary(tmp_path) is None


def test_error_record(tmp_path):
    path = write_error(tmp_path, "continue", ValueError("bad input"))

    assert path.read_text(encoding="utf-8").count("ValueError") == 1
    assert '"mode": "continue"' in path.read_text(encoding="utf-8")


def test_sharp_mask_file(tmp_path):
    mask = SharpMask(node_values=np.array([1, -1, 1]), cell_values=np.array([1, -1]))

    lines = write_sharp_mask(tmp_path, mask).read_text(encoding="utf-8").split()

    assert lines == ["1", "-1"]
