"""Flat key=value config files mirroring the CLI flags.

One option per line, `key=value`. Blank lines and lines starting with #
are ignored. Values are kept as strings; the CLI's option types coerce
them. Keys may use dashes or underscores interchangeably.
"""

from __future__ import annotations

from .errors import InvalidConfigError


def parse_config(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise InvalidConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise InvalidConfigError(f"line {lineno}: empty key")
        out[key] = value.strip()
    return out


def serialize_config(config: dict[str, str]) -> str:
    lines = []
    for key in sorted(config):
        value = str(config[key])
        if "=" in key or key.startswith("#") or not key.strip():
            raise InvalidConfigError(f"unserializable key {key!r}")
        if "\n" in value:
            raise InvalidConfigError(f"value for {key!r} contains a newline")
        lines.append(f"{key}={value}")
    return "\n".join(lines) + "\n"


def load_config_file(path: str) -> dict[str, str]:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
