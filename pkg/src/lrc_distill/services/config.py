from pathlib import Path
from typing import Any

import yaml
from loguru import logger
from pydantic import ValidationError

from lrc_distill.errors import ConfigError
from lrc_distill.services.models import RunConfig, RunManifest


def validation_to_config_error(error: ValidationError, source: str) -> ConfigError:
    """Flatten pydantic errors into one message with dotted field locations."""
    fields = [".".join(str(part) for part in item["loc"]) for item in error.errors()]
    lines = [
        f"  {field or '<root>'}: {item['msg']}"
        for field, item in zip(fields, error.errors(), strict=True)
    ]
    return ConfigError(f"Invalid configuration in {source}:\n" + "\n".join(lines), fields=fields)


def _read_tree(path: Path) -> dict[str, Any]:
    if not path.exists():
        raise ConfigError(f"Config file not found: {path}")
    try:
        # JSON is a subset of YAML, so one parser covers both formats
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as e:
        raise ConfigError(f"Cannot parse {path}: {e}")
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must contain a mapping at the top level")
    return data


def load_run_config(path: Path) -> RunConfig:
    """
    Load a run config from YAML/JSON, or replay the snapshot of a manifest.

    Raises:
        ConfigError: Unreadable file or invalid fields (with dotted locations).
    """
    data = _read_tree(path)
    try:
        if "config" in data and "kind" in data:
            logger.debug(f"Replaying config snapshot from manifest {path}")
            return RunManifest.model_validate(data).config
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise validation_to_config_error(e, str(path)) from e


def apply_overrides(config: RunConfig, overrides: dict[str, Any]) -> RunConfig:
    """
    Return a re-validated copy with dotted-key overrides applied.

    ``None`` values are ignored so unset CLI flags leave the file untouched.
    """
    tree = config.model_dump(mode="json")
    changed = False
    for dotted, value in overrides.items():
        if value is None:
            continue
        node = tree
        *parents, leaf = dotted.split(".")
        for key in parents:
            if node.get(key) is None:
                node[key] = {}
            node = node[key]
        node[leaf] = str(value) if isinstance(value, Path) else value
        changed = True
    if not changed:
        return config
    try:
        return RunConfig.model_validate(tree)
    except ValidationError as e:
        raise validation_to_config_error(e, "command-line overrides") from e


def load_manifest(path: Path) -> RunManifest:
    try:
        return RunManifest.model_validate_json(path.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise ConfigError(f"Manifest not found: {path}") from e
    except ValidationError as e:
        raise validation_to_config_error(e, str(path)) from e


def write_manifest(manifest: RunManifest, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(manifest.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return path
