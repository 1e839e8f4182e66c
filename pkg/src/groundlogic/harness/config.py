"""TOML run configuration.

Example::

    [automaton]
    max_retries = 6
    confidence_floor = 0.05

    [backends.default]
    endpoint = "https://api.example.com/v1"
    api_key_env = "GROUNDING_API_KEY"

    [backends.detector]
    endpoint = "http://localhost:8000"

Role sections inherit every key from ``[backends.default]``.  Secrets are
named by environment variable only; a literal ``api_key`` is refused.
"""

from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..automaton import AutomatonConfig
from ..backends import CHAT_ROLES, VISION_ROLES, BackendConfig


class ConfigError(ValueError):
    pass


_AUTOMATON_KEYS = {f.name for f in dataclasses.fields(AutomatonConfig)}
_BACKEND_KEYS = {f.name for f in dataclasses.fields(BackendConfig)}
_SET_KEYS = {"geometric_relations", "depth_relations"}


@dataclass
class RunConfig:
    automaton: AutomatonConfig = field(default_factory=AutomatonConfig)
    backends: dict[str, BackendConfig] = field(default_factory=dict)


def _automaton(raw: dict) -> AutomatonConfig:
    unknown = set(raw) - _AUTOMATON_KEYS
    if unknown:
        raise ConfigError(f"[automaton]: unknown keys {sorted(unknown)}")
    values = {k: frozenset(v) if k in _SET_KEYS else v for k, v in raw.items()}
    try:
        return AutomatonConfig(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[automaton]: {exc}") from exc


def _backend(name: str, raw: dict) -> BackendConfig:
    if "api_key" in raw:
        raise ConfigError(f"[backends.{name}]: store secrets in an environment variable and set api_key_env")
    unknown = set(raw) - _BACKEND_KEYS
    if unknown:
        raise ConfigError(f"[backends.{name}]: unknown keys {sorted(unknown)}")
    if "endpoint" not in raw:
        raise ConfigError(f"[backends.{name}]: endpoint is required")
    try:
        return BackendConfig(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[backends.{name}]: {exc}") from exc


def parse_config(data: dict) -> RunConfig:
    unknown = set(data) - {"automaton", "backends"}
    if unknown:
        raise ConfigError(f"unknown sections {sorted(unknown)}")
    automaton = _automaton(data.get("automaton", {}))
    sections = dict(data.get("backends", {}))
    default = sections.pop("default", {})
    if "api_key" in default:
        _backend("default", default)
    roles = set(CHAT_ROLES) | set(VISION_ROLES)
    bad = set(sections) - roles
    if bad:
        raise ConfigError(f"unknown backend roles {sorted(bad)}")

    backends = {}
    for role in CHAT_ROLES + VISION_ROLES:
        if role in sections:
            backends[role] = _backend(role, {**default, **sections[role]})
        elif default and role in CHAT_ROLES:
            # Chat roles usually share one endpoint; vision services never do.
            backends[role] = _backend("default", default)
    return RunConfig(automaton, backends)


def load_config(path: str | Path) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(data)
