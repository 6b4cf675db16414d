"""Flat ``key=value`` config files with ``COGKR_*`` environment overrides.

Precedence: explicit overrides (command-line flags) > environment > file > defaults.
"""
from __future__ import annotations

import os
from dataclasses import fields

ENV_PREFIX = "COGKR_"


def parse_kv(path: str) -> dict[str, str]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def _coerce(value, current):
    if isinstance(current, bool):
        if isinstance(value, bool):
            return value
        v = str(value).lower()
        if v not in ("1", "0", "true", "false", "yes", "no"):
            raise ValueError(f"not a boolean: {value!r}")
        return v in ("1", "true", "yes")
    if isinstance(current, int) and not isinstance(current, bool):
        return int(value)
    if isinstance(current, float):
        return float(value)
    return str(value)


def resolve(cls, path: str | None = None, overrides: dict | None = None, env=None):
    """Build a dataclass instance from defaults, file, environment and overrides."""
    env = os.environ if env is None else env
    defaults = cls()
    names = {f.name for f in fields(cls)}
    values = {}
    if path:
        for key, value in parse_kv(path).items():
            if key not in names:
                raise ValueError(f"unknown config key {key!r}")
            values[key] = value
    for name in names:
        key = ENV_PREFIX + name.upper()
        if key in env:
            values[name] = env[key]
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in names:
            raise ValueError(f"unknown config key {key!r}")
        values[key] = value
    return cls(**{k: _coerce(v, getattr(defaults, k)) for k, v in values.items()})


def dump(obj, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for f in fields(obj):
            fh.write(f"{f.name}={getattr(obj, f.name)}\n")
