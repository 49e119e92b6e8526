"""Run configuration files.

A configuration file is a JSON object with optional ``train``, ``eval``,
``bench`` and ``gen`` sections. Values are merged as: command-line flags over
file values over built-in defaults. The merged result is recorded in reports.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

from colorflow.errors import ConfigError

SECTIONS = ("train", "eval", "bench", "gen")
THREADS_ENV = "COLORFLOW_THREADS"


def load_config(path: str | Path | None) -> dict[str, dict[str, Any]]:
    """Read a configuration file; ``None`` gives empty sections.

    Raises:
        ConfigError: unreadable file, invalid JSON or an unknown section
    """
    sections: dict[str, dict[str, Any]] = {name: {} for name in SECTIONS}
    if path is None:
        return sections
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror or e}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path} is not valid JSON: {e}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must contain a JSON object")
    unknown = sorted(set(data) - set(SECTIONS))
    if unknown:
        raise ConfigError(f"unknown config section(s): {', '.join(unknown)}")
    for name, values in data.items():
        if not isinstance(values, dict):
            raise ConfigError(f"config section {name!r} must be an object")
        sections[name] = dict(values)
    return sections


def merge(defaults: dict[str, Any], file_values: dict[str, Any], flags: dict[str, Any]) -> dict[str, Any]:
    """Layer flag values (``None`` means not given) over file values over defaults."""
    merged = dict(defaults)
    merged.update(file_values)
    merged.update({key: value for key, value in flags.items() if value is not None})
    return merged


def pick(section: dict[str, Any], allowed: tuple[str, ...], label: str) -> dict[str, Any]:
    """Reject keys outside ``allowed`` in a config section."""
    unknown = sorted(set(section) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown {label} option(s): {', '.join(unknown)}")
    return dict(section)
