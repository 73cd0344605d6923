#!/usr/bin/env python3
"""
Shared configuration loader for the solver tools
Handles .env files, JSON config files and key = value run files
"""

import os
import json
from pathlib import Path
from typing import Any, Optional

from dotenv import find_dotenv, load_dotenv
import jsonschema

ENV_PREFIX = "FEM_"


def load_env(env_path: Optional[Path] = None) -> bool:
    """Load the given .env file, or the nearest one above the working directory"""
    return load_dotenv(env_path or find_dotenv(usecwd=True))


def get_env(key: str, prefix: str = ENV_PREFIX) -> Optional[str]:
    """Prefixed, upper-cased environment lookup: n -> FEM_N"""
    return os.getenv(prefix + key.upper())


def load_json_config(config_path: Path) -> dict[str, Any]:
    """Load JSON configuration file"""
    if not config_path.exists():
        raise FileNotFoundError(f"Config file not found: {config_path}")

    with open(config_path, 'r', encoding='utf-8') as f:
        data = json.load(f)
    if not isinstance(data, dict):
        raise ValueError(f"Config file must contain a JSON object: {config_path}")
    return data


def parse_key_value(text: str) -> dict[str, str]:
    """Parse `key = value` lines; '#' starts a comment"""
    result: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"Line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = line.split("=", 1)
        key = key.strip().replace("-", "_")
        if not key:
            raise ValueError(f"Line {lineno}: empty key")
        result[key] = value.strip()
    return result


def load_config_file(config_path: Path) -> dict[str, Any]:
    """Load a run config: JSON for *.json, key = value lines otherwise"""
    if config_path.suffix.lower() == ".json":
        return load_json_config(config_path)
    if not config_path.exists():
        raise FileNotFoundError(f"Config file not found: {config_path}")
    return parse_key_value(config_path.read_text(encoding="utf-8"))


def merge_configs(base: dict, override: dict) -> dict:
    """Deep merge two configuration dictionaries; None in override is ignored"""
    result = base.copy()
    for key, value in override.items():
        if value is None:
            continue
        if key in result and isinstance(result[key], dict) and isinstance(value, dict):
            result[key] = merge_configs(result[key], value)
        else:
            result[key] = value
    return result


def validate_config(config: dict[str, Any], schema: dict[str, Any]) -> None:
    """Validate a merged config against a JSON schema, raising ValueError"""
    validator = jsonschema.Draft7Validator(schema)
    errors = sorted(validator.iter_errors(config), key=lambda e: list(e.path))
    if errors:
        messages = []
        for error in errors:
            where = ".".join(str(p) for p in error.path) or "<root>"
            messages.append(f"{where}: {error.message}")
        raise ValueError("; ".join(messages))


class LayeredConfig:
    """Config lookup: file values first, then FEM_* environment, then defaults"""

    def __init__(
        self,
        defaults: dict[str, Any],
        config_path: Optional[Path] = None,
        env_prefix: str = ENV_PREFIX,
    ):
        self.defaults = dict(defaults)
        self.env_prefix = env_prefix
        self._config: dict[str, Any] = {}

        load_env()

        if config_path is not None:
            self._config = load_config_file(config_path)

    def get(self, key: str, default: Any = None) -> Any:
        """Get config value, checking the file first, then env vars, then defaults"""
        if key in self._config:
            return self._config[key]

        env_value = get_env(key, self.env_prefix)
        if env_value is not None:
            return env_value

        if key in self.defaults:
            return self.defaults[key]
        return default

    def as_dict(self) -> dict[str, Any]:
        """Resolve every known key (defaults plus file keys)"""
        keys = list(self.defaults) + [k for k in self._config if k not in self.defaults]
        return {key: self.get(key) for key in keys}
