"""Flat ``name = value`` parameter files and JSON helpers.

Physical constants, expert boxes and the baseline recipe live in small text
files, one ``name = value`` pair per line. ``#`` starts a comment, which is
where units are documented.
"""

from __future__ import annotations

import json
import os
from importlib import resources
from pathlib import Path
from typing import Mapping

__all__ = [
    "ConfigError",
    "load_kv",
    "parse_kv",
    "dump_kv",
    "data_path",
    "write_json",
    "read_json",
]


class ConfigError(ValueError):
    """Malformed or missing configuration file."""


def parse_kv(text: str, source: str = "<string>") -> dict[str, float]:
    values: dict[str, float] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'name = value', got {raw!r}")
        name, _, value = line.partition("=")
        name = name.strip()
        if not name.isidentifier():
            raise ConfigError(f"{source}:{lineno}: invalid key {name!r}")
        if name in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {name!r}")
        try:
            values[name] = float(value.strip())
        except ValueError:
            raise ConfigError(f"{source}:{lineno}: value of {name!r} is not a number") from None
    return values


def load_kv(path: str | os.PathLike) -> dict[str, float]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"parameter file not found: {path}") from None
    return parse_kv(text, source=str(path))


def dump_kv(values: Mapping[str, float], header: str = "") -> str:
    lines = [f"# {h}" for h in header.splitlines()] if header else []
    lines += [f"{k} = {float(v)!r}" for k, v in values.items()]
    return "\n".join(lines) + "\n"


def data_path(name: str) -> Path:
    """Path of a file shipped in ``recipe_rl/data``."""
    return Path(str(resources.files("recipe_rl") / "data" / name))


def write_json(path: str | os.PathLike, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_json(path: str | os.PathLike):
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
