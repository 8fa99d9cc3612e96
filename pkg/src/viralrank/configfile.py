"""``key = value`` configuration files with a mandatory ``version`` line.

Example::

    # boosting settings
    version = 1
    num_trees = 200
    learning_rate = 0.05
    goss_enabled = false
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import fields
from pathlib import Path
from typing import Any

from .gbrt import TrainConfig

CONFIG_VERSION = 1


class ConfigError(ValueError):
    pass


def _coerce(raw: str) -> Any:
    low = raw.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    for cast in (int, float):
        try:
            return cast(raw)
        except ValueError:
            pass
    if len(raw) >= 2 and raw[0] == raw[-1] and raw[0] in "'\"":
        return raw[1:-1]
    return raw


def parse_config(text: str) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in stripped.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = _coerce(value)
    version = out.pop("version", None)
    if version is None:
        raise ConfigError("config lacks a 'version' line")
    if version != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {version!r}")
    return out


def read_config(path: str | os.PathLike[str]) -> dict[str, Any]:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def format_config(values: dict[str, Any]) -> str:
    lines = [f"version = {CONFIG_VERSION}"]
    for key in sorted(values):
        value = values[key]
        if isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def train_config_from(values: dict[str, Any], *, strict: bool = True) -> TrainConfig:
    """Build a :class:`TrainConfig`, casting numbers to the declared field types."""
    typed: dict[str, Any] = {}
    known = {f.name: f for f in fields(TrainConfig)}
    for key, value in values.items():
        if key not in known:
            if strict:
                raise ConfigError(f"unknown training key {key!r}")
            continue
        default = getattr(TrainConfig(), key)
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"{key} must be true or false")
        elif isinstance(default, int):
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"{key} must be an integer")
        elif isinstance(default, float):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{key} must be a number")
            value = float(value)
        typed[key] = value
    try:
        return TrainConfig(**typed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def file_digest(path: str | os.PathLike[str]) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
