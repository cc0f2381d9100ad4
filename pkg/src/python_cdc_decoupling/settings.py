"""
Run configuration resolution.

Precedence, lowest first: dataclass default, CDC_SEED (seed only), preset,
JSON config file, command-line flag.
"""

import json
import os
from dataclasses import fields
from typing import Any, Mapping, Optional, Type, TypeVar, Union

from python_cdc_decoupling.classes.config import PRESETS, ConfigError, ScmConfig, TrainConfig
from python_cdc_decoupling.tools.utils import is_empty_or_none

SEED_ENV = "CDC_SEED"
PATH_KEYS = {"dataset", "checkpoint", "report", "out", "preset"}

ConfigType = TypeVar("ConfigType", TrainConfig, ScmConfig)


def _field_names(cls) -> set[str]:
    return {f.name for f in fields(cls)}


def known_keys() -> set[str]:
    return _field_names(TrainConfig) | _field_names(ScmConfig) | PATH_KEYS


def load_config_file(path: Optional[str]) -> dict[str, Any]:
    """Flat JSON object; an unknown key is an error naming the key."""
    if is_empty_or_none(path):
        return {}
    with open(path, "r", encoding="utf-8") as handle:
        try:
            values = json.load(handle)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: not valid JSON ({e.msg} at line {e.lineno})")
    if not isinstance(values, dict):
        raise ConfigError(f"{path}: expected a JSON object at top level")
    unknown = sorted(set(values) - known_keys())
    if unknown:
        raise ConfigError(f"{path}: unknown config key(s) {', '.join(unknown)}")
    return values


def env_seed() -> Optional[int]:
    raw = os.environ.get(SEED_ENV)
    if is_empty_or_none(raw):
        return None
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {raw!r}")


def preset_values(name: Optional[str]) -> dict[str, Any]:
    if name is None:
        return {}
    if name not in PRESETS:
        raise ConfigError(f"Unknown preset '{name}', expected one of {', '.join(sorted(PRESETS))}")
    return dict(PRESETS[name])


def resolve(
        cls: Type[ConfigType], flags: Mapping[str, Any], file_values: Optional[Mapping[str, Any]] = None
) -> ConfigType:
    file_values = file_values or {}
    names = _field_names(cls)
    values: dict[str, Any] = {}
    seed = env_seed()
    if seed is not None:
        values["seed"] = seed
    if cls is TrainConfig:
        values.update(preset_values(flags.get("preset", file_values.get("preset"))))
    values.update({k: v for k, v in file_values.items() if k in names})
    values.update({k: v for k, v in flags.items() if k in names})
    try:
        return cls.from_mapping(values)
    except TypeError as e:
        raise ConfigError(f"Invalid configuration value: {e}")


def resolve_path(key: str, flags: Mapping[str, Any], file_values: Mapping[str, Any], default: Union[str, None] = None) -> str:
    value = flags.get(key, file_values.get(key, default))
    if is_empty_or_none(value):
        raise ConfigError(f"Missing required path '--{key}'")
    return value
