"""Run directory persistence: config echo, CSV tables, summary JSON, masks and error records.

All writers produce byte-identical files for identical inputs: keys are
sorted, floats use ``repr`` and nothing time-dependent is recorded.
"""

import csv
import json
import logging
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Union

import numpy as np
from pydantic import BaseModel

from app.core.config import settings
from app.models.objective import SharpMask
from app.models.run_config import RunConfig

logger = logging.getLogger(__name__)

CONFIG_FILE = "config.json"
SUMMARY_FILE = "summary.json"
ERROR_FILE = "error.json"
SHARP_MASK_FILE = "sharp_mask.txt"


# ---------------------------------------------------------------------------
# Directory
# ---------------------------------------------------------------------------


def resolve_run_dir(config: RunConfig, override: Optional[str] = None) -> Path:
    """--out wins over the config's output_dir, which wins over Settings.OUTPUT_DIR/<mode>."""

    if override:
        return Path(override)
    if config.output_dir:
        return Path(config.output_dir)
    return Path(settings.OUTPUT_DIR) / config.mode.value


def prepare_run_dir(path: Path) -> Path:
    path.mkdir(parents=True, exist_ok=True)
    stale = path / ERROR_FILE
    if stale.exists():
        stale.unlink()
    return path


# ---------------------------------------------------------------------------
# Writers
# ---------------------------------------------------------------------------


def _json_ready(value: Any) -> Any:
    if isinstance(value, BaseModel):
        return _json_ready(value.model_dump(mode="json"))
    if isinstance(value, Mapping):
        return {str(k): _json_ready(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_ready(v) for v in value]
    if isinstance(value, np.ndarray):
        return _json_ready(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    return value


def write_json(path: Path, payload: Any) -> Path:
    path.write_text(json.dumps(_json_ready(payload), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def write_config(run_dir: Path, config: RunConfig) -> Path:
    return write_json(run_dir / CONFIG_FILE, config.to_json())


def write_summary(run_dir: Path, summary: Mapping[str, Any]) -> Path:
    return write_json(run_dir / SUMMARY_FILE, summary)


def write_table(path: Path, rows: Iterable[Union[Mapping[str, Any], BaseModel]]) -> Path:
    """CSV with the column order of the first row; an empty table writes an empty file."""

    records = [row.model_dump() if isinstance(row, BaseModel) else dict(row) for row in rows]
    with path.open("w", newline="", encoding="utf-8") as handle:
        if records:
            writer = csv.DictWriter(handle, fieldnames=list(records[0]), lineterminator="\n")
            writer.writeheader()
            for record in records:
                writer.writerow({k: "" if v is None else v for k, v in record.items()})
    logger.debug("Wrote %s (%d rows)", path, len(records))
    return path


def write_sharp_mask(run_dir: Path, mask: SharpMask) -> Path:
    """One cell value per line, +1 fluid and -1 solid, in triangle order."""

    path = run_dir / SHARP_MASK_FILE
    np.savetxt(path, mask.cell_values, fmt="%d")
    return path


def write_error(run_dir: Path, mode: str, exc: BaseException) -> Path:
    return write_json(
        run_dir / ERROR_FILE,
        {"error_type": type(exc).__name__, "message": str(exc), "mode": mode},
    )


# ---------------------------------------------------------------------------
# Readers
# ---------------------------------------------------------------------------


def read_summary(run_dir: Path) -> Optional[dict]:
    path = run_dir / SUMMARY_FILE
    if not path.exists():
        return None
    return json.loads(path.read_text(encoding="utf-8"))


def read_table(path: Path) -> list[dict]:
    with path.open(newline="", encoding="utf-8") as handle:
        return list(csv.DictReader(handle))
