"""Flat key=value run configuration.

Files hold one ``key = value`` pair per line with ``#`` comments; unknown
keys are errors so drifted configs fail loudly. Manifests use the same
format, so any run can be replayed from its manifest.
"""

from __future__ import annotations

from pathlib import Path

__all__ = [
    "REQUIRED",
    "parse_kv_text",
    "load_kv_file",
    "resolve_config",
    "format_kv",
    "write_manifest",
    "parse_bool",
    "parse_shape",
    "parse_int_pair",
    "parse_float_list",
]

REQUIRED = object()


def parse_kv_text(text: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value, got {raw.strip()!r}")
        key, val = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ValueError(f"line {lineno}: empty key")
        if key in values:
            raise ValueError(f"line {lineno}: duplicate key {key!r}")
        values[key] = val.strip()
    return values


def load_kv_file(path) -> dict[str, str]:
    return parse_kv_text(Path(path).read_text(encoding="utf-8"))


def resolve_config(schema: dict, file_values: dict[str, str],
                   overrides: dict[str, str] | None = None) -> dict:
    """Apply defaults, file values, then overrides; cast; reject unknowns.

    ``schema`` maps key -> (caster, default); a default of REQUIRED makes
    the key mandatory.
    """
    unknown = set(file_values) - set(schema)
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    merged = dict(file_values)
    for key, val in (overrides or {}).items():
        if key not in schema:
            raise ValueError(f"unknown config key {key!r}")
        merged[key] = val
    resolved = {}
    for key, (caster, default) in schema.items():
        if key in merged:
            try:
                resolved[key] = caster(merged[key])
            except (TypeError, ValueError) as exc:
                raise ValueError(f"config key {key!r}: {exc}") from exc
        elif default is REQUIRED:
            raise ValueError(f"missing required config key {key!r}")
        else:
            resolved[key] = default
    return resolved


def format_kv(mapping: dict) -> str:
    lines = []
    for key in mapping:
        val = mapping[key]
        if isinstance(val, tuple):
            val = ",".join(str(v) for v in val)
        lines.append(f"{key} = {val}")
    return "\n".join(lines) + "\n"


def write_manifest(path, mapping: dict) -> None:
    Path(path).write_text(format_kv(mapping), encoding="utf-8")


def parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def parse_shape(text: str) -> tuple[int, ...]:
    dims = tuple(int(d) for d in text.lower().split("x"))
    if len(dims) < 2 or any(d < 1 for d in dims):
        raise ValueError(f"expected HxW[xC], got {text!r}")
    return dims


def parse_int_pair(text: str) -> tuple[int, int]:
    parts = [int(p) for p in text.split(",")]
    if len(parts) != 2:
        raise ValueError(f"expected two integers, got {text!r}")
    return parts[0], parts[1]


def parse_float_list(text: str) -> tuple[float, ...]:
    return tuple(float(p) for p in text.split(","))
