"""Runtime configuration with flags > environment > config file precedence."""

from __future__ import annotations

import os
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, Mapping

import yaml


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Config:
    backend: str = "mock"  # mock | network
    model_id: str = "default"
    backend_url: str = ""
    api_key: str = ""
    driver: str = "simulated"  # simulated | cdp
    cdp_endpoint: str = ""
    fixtures_path: str = ""
    store_path: str = ""  # empty: in-memory stores
    host: str = "127.0.0.1"
    port: int = 8787
    regen_throttle_s: float = 3.0
    node_timeout_s: float = 120.0
    action_budget: int = 20
    quiet: bool = False


_ENV_KEYS = {
    "DEMOFLOW_BACKEND": "backend",
    "DEMOFLOW_MODEL_ID": "model_id",
    "DEMOFLOW_CDP_ENDPOINT": "cdp_endpoint",
    "DEMOFLOW_STORE_PATH": "store_path",
}

_CHOICES = {"backend": ("mock", "network"), "driver": ("simulated", "cdp")}


def _coerce(name: str, value: Any, kind: type) -> Any:
    try:
        if kind is bool and isinstance(value, str):
            return value.strip().lower() in ("1", "true", "yes", "on")
        return kind(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config field {name!r}: cannot read {value!r} as {kind.__name__}") from exc


def load_config(
    path: str | Path | None = None,
    *,
    env: Mapping[str, str] | None = None,
    overrides: Mapping[str, Any] | None = None,
) -> Config:
    """Merge defaults, config file, environment, and explicit overrides."""
    env = os.environ if env is None else env
    allowed = {f.name: f.type for f in fields(Config)}
    kinds = {f.name: type(getattr(Config(), f.name)) for f in fields(Config)}
    config = Config()

    if path is not None:
        try:
            loaded = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"config file {path} is not valid YAML: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError(f"config file {path} must hold a mapping")
        unknown = sorted(set(loaded) - set(allowed))
        if unknown:
            raise ConfigError(f"unknown config fields: {', '.join(unknown)}")
        config = replace(
            config, **{k: _coerce(k, v, kinds[k]) for k, v in loaded.items()}
        )

    env_values = {
        field: env[key] for key, field in _ENV_KEYS.items() if env.get(key)
    }
    config = replace(
        config, **{k: _coerce(k, v, kinds[k]) for k, v in env_values.items()}
    )

    if overrides:
        supplied = {k: v for k, v in overrides.items() if v is not None}
        unknown = sorted(set(supplied) - set(allowed))
        if unknown:
            raise ConfigError(f"unknown config overrides: {', '.join(unknown)}")
        config = replace(
            config, **{k: _coerce(k, v, kinds[k]) for k, v in supplied.items()}
        )

    for name, choices in _CHOICES.items():
        if getattr(config, name) not in choices:
            raise ConfigError(
                f"config field {name!r} must be one of {list(choices)}, got {getattr(config, name)!r}"
            )
    return config
