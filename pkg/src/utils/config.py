"""
Flat key-value configuration files and their mapping onto config dataclasses
"""
import dataclasses
import typing
from pathlib import Path

from src.utils.errors import DataError


def read_config_file(filepath):
    """
    Parse a flat ``key = value`` file

    Blank lines and ``#`` comments are ignored. Returns dict of raw strings.
    """
    values = {}
    with open(filepath, "r") as f:
        for number, line in enumerate(f, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DataError(f"expected 'key = value', got {line!r}", line=number)
            key, value = line.split("=", 1)
            key = key.strip().replace("-", "_")
            if not key:
                raise DataError("empty key", line=number)
            values[key] = value.strip()
    return values


def write_config_file(filepath, *configs):
    """Write one or more config dataclasses as a flat key-value file."""
    lines = []
    for config in configs:
        lines.append(f"# {type(config).__name__}")
        for field in dataclasses.fields(config):
            value = getattr(config, field.name)
            if isinstance(value, (tuple, list)):
                value = ",".join(str(v) for v in value)
            lines.append(f"{field.name} = {value}")
    Path(filepath).write_text("\n".join(lines) + "\n")


def _coerce(raw, annotation, key):
    if isinstance(raw, str):
        text = raw.strip()
    else:
        return raw
    try:
        if annotation is bool:
            lowered = text.lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if annotation is int:
            return int(text)
        if annotation is float:
            return float(text)
        origin = typing.get_origin(annotation)
        if origin is tuple:
            inner = typing.get_args(annotation)[0]
            return tuple(inner(part) for part in text.split(",") if part.strip())
        if origin is typing.Union:
            args = [a for a in typing.get_args(annotation) if a is not type(None)]
            if text.lower() in ("none", ""):
                return None
            return _coerce(text, args[0], key)
    except ValueError:
        raise DataError(f"cannot parse {key}={raw!r} as {annotation}") from None
    return text


def coerce_values(config_type, values):
    """Typed copy of the entries of ``values`` that are fields of ``config_type``; None values are skipped."""
    hints = typing.get_type_hints(config_type)
    names = {f.name for f in dataclasses.fields(config_type)}
    return {key: _coerce(raw, hints[key], key) for key, raw in (values or {}).items()
            if key in names and raw is not None}


def build_config(config_type, *layers):
    """
    Instantiate ``config_type`` from layered values (later layers win)

    Each layer is a dict of raw strings or typed values; keys that are not
    fields of the dataclass are ignored and None values are skipped.
    """
    values = {}
    for layer in layers:
        values.update(coerce_values(config_type, layer))
    return config_type(**values)


def check_known_keys(values, *config_types):
    """Reject keys that belong to none of the given dataclasses."""
    names = set()
    for config_type in config_types:
        names.update(f.name for f in dataclasses.fields(config_type))
    unknown = sorted(set(values) - names)
    if unknown:
        raise DataError(f"unknown configuration keys: {', '.join(unknown)}")
