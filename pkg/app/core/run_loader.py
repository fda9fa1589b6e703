"""Loading of JSON run configurations."""

import json
from pathlib import Path
from typing import Any, Optional

from pydantic import ValidationError

from app.models.run_config import RunConfig


class ConfigError(ValueError):
    """The run configuration is unreadable or violates the schema."""


def _describe(exc: ValidationError) -> str:
    lines = []
    for error in exc.errors():
        location = ".".join(str(part) for part in error["loc"]) or "<root>"
        lines.append(f"{location}: {error['msg']}")
    return "; ".join(lines)


def parse_config(path: Path, overrides: Optional[dict[str, Any]] = None) -> RunConfig:
    """Read and validate ``path``; ``overrides`` replace top-level keys before validation."""

    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top-level JSON value must be an object")

    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(f"{path}: {_describe(exc)}") from exc

