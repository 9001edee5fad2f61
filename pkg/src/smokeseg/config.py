"""Key=value run configs: file parsing, flag overrides, resolved-config dumps.

Files are UTF-8 ``key=value`` lines; ``#`` starts a comment. Keys not in a
command's allowed set are rejected. Command-line flags override file values,
and every run writes its fully resolved config next to its outputs.
"""

from __future__ import annotations

from pathlib import Path

from .errors import ConfigError


def parse_config_text(text: str) -> dict:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = value.strip()
    return values


def read_config_file(path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text)


def resolve(file_values: dict, overrides: dict, allowed: dict) -> dict:
    """Merge file values and flag overrides against an allowed-key schema.

    ``allowed`` maps key -> (converter, default). Unknown keys raise
    ConfigError; overrides with value None are treated as unset.
    """
    unknown = sorted(set(file_values) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    resolved = {}
    for key, (convert, default) in allowed.items():
        if overrides.get(key) is not None:
            raw = overrides[key]
        elif key in file_values:
            raw = file_values[key]
        else:
            resolved[key] = default
            continue
        try:
            resolved[key] = convert(raw) if isinstance(raw, str) else raw
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key!r}: {raw!r} ({exc})") from exc
    return resolved


def dump_config(values: dict) -> str:
    return "\n".join(f"{key}={values[key]}" for key in sorted(values)) + "\n"


def write_resolved(path, values: dict) -> None:
    Path(path).write_text(dump_config(values), encoding="utf-8")
