"""
Flat ``key=value`` files for run configuration and TSV column mapping.

Precedence when resolving a run: model defaults < config file < ``--set``
overrides < dedicated command-line flags.
"""

import logging
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, Optional, Union

from dotenv import dotenv_values
from pydantic import ValidationError

from ..errors import ConfigurationError
from ..models.config_models import RunConfig
from ..models.essay_models import ColumnSchema

logger = logging.getLogger(__name__)

SCHEMA_FIELDS = ("id", "essay", "empathy", "distress", "emotion", "age", "gender",
                 "ethnicity", "income", "education")


def read_flat_file(path: Union[str, Path]) -> Dict[str, str]:
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    values = dotenv_values(path, interpolate=False)
    for key, value in values.items():
        if value is None:
            raise ConfigurationError(f"{path}: key {key!r} has no value (expected key=value)")
    return dict(values)


def parse_overrides(pairs: Iterable[str]) -> Dict[str, str]:
    overrides = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep or not key.strip():
            raise ConfigurationError(f"override {pair!r} is not key=value")
        overrides[key.strip()] = value.strip()
    return overrides


def build_run_config(values: Dict[str, object], source: str = "configuration") -> RunConfig:
    unknown = sorted(set(values) - set(RunConfig.model_fields))
    if unknown:
        raise ConfigurationError(f"{source}: unknown config key(s): {', '.join(unknown)}")
    try:
        return RunConfig(**values)
    except ValidationError as exc:
        problems = "; ".join(f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in exc.errors())
        raise ConfigurationError(f"{source}: {problems}") from exc


def load_run_config(path: Optional[Union[str, Path]] = None,
                    overrides: Optional[Dict[str, object]] = None) -> RunConfig:
    values: Dict[str, object] = {}
    if path is not None:
        values.update(read_flat_file(path))
    values.update(overrides or {})
    return build_run_config(values, str(path) if path else "configuration")


def _format_value(value) -> str:
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def write_run_config(config: RunConfig, path: Union[str, Path]) -> None:
    """Resolved configuration, one key per line in field order; unset paths are omitted"""
    lines = [f"{key}={_format_value(value)}" for key, value in config if value is not None]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_schema(path: Optional[Union[str, Path]] = None) -> ColumnSchema:
    """
    Column mapping file: logical name = TSV header. An empty value leaves the
    column unmapped; any personality_<trait> key replaces the default traits.
    """
    if path is None:
        return ColumnSchema()
    values = read_flat_file(path)
    fields: Dict[str, object] = {}
    personality: Dict[str, str] = {}
    for key, value in values.items():
        value = value.strip()
        if key.startswith("personality_"):
            if value:
                personality[key[len("personality_"):]] = value
        elif key in SCHEMA_FIELDS:
            fields[key] = value or None
        else:
            raise ConfigurationError(f"{path}: unknown schema key {key!r}")
    if personality:
        fields["personality"] = personality
    if "essay" in fields and not fields["essay"]:
        raise ConfigurationError(f"{path}: the essay column must be mapped")
    return ColumnSchema(**fields)
