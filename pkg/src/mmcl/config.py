"""Config (de)serialization: strict dataclass <-> dict conversion, YAML
config files for the CLI, and stable config hashing."""

from __future__ import annotations

import dataclasses
import enum
import hashlib
import json
import typing

import yaml

from .errors import ConfigurationError


def to_plain(obj):
    """Recursively convert dataclasses / enums / tuples to JSON-able types."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {
            f.name: to_plain(getattr(obj, f.name))
            for f in dataclasses.fields(obj)
        }
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, dict):
        return {k: to_plain(v) for k, v in obj.items()}
    return obj


def _convert(value, target_type, path):
    origin = typing.get_origin(target_type)
    if dataclasses.is_dataclass(target_type):
        return from_plain(target_type, value, path)
    if isinstance(target_type, type) and issubclass(target_type, enum.Enum):
        try:
            return target_type(value)
        except ValueError:
            raise ConfigurationError(f"{path}: invalid value {value!r}") from None
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigurationError(f"{path}: expected a list")
        args = typing.get_args(target_type)
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_convert(v, args[0], f"{path}[{i}]") for i, v in enumerate(value))
        if args and len(value) != len(args):
            raise ConfigurationError(
                f"{path}: expected {len(args)} entries, got {len(value)}"
            )
        return tuple(
            _convert(v, t, f"{path}[{i}]")
            for i, (v, t) in enumerate(zip(value, args))
        )
    if origin is typing.Union:
        # Only Optional[...] appears in our configs.
        args = [a for a in typing.get_args(target_type) if a is not type(None)]
        if value is None:
            return None
        return _convert(value, args[0], path)
    if target_type is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigurationError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if target_type is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigurationError(f"{path}: expected an integer, got {value!r}")
        return value
    if target_type is bool:
        if not isinstance(value, bool):
            raise ConfigurationError(f"{path}: expected a boolean, got {value!r}")
        return value
    if target_type is str:
        if not isinstance(value, str):
            raise ConfigurationError(f"{path}: expected a string, got {value!r}")
        return value
    return value


def from_plain(cls, mapping, path: str = ""):
    """Build dataclass ``cls`` from a nested mapping; unknown keys are
    rejected with their full path."""
    if not isinstance(mapping, dict):
        raise ConfigurationError(f"{path or cls.__name__}: expected a mapping")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in mapping.items():
        child = f"{path}.{key}" if path else key
        if key not in names:
            raise ConfigurationError(f"unknown config key {child!r}")
        kwargs[key] = _convert(value, hints[key], child)
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigurationError(f"{path or cls.__name__}: {exc}") from exc


def config_hash(obj) -> str:
    payload = json.dumps(to_plain(obj), sort_keys=True).encode()
    return hashlib.sha256(payload).hexdigest()[:16]


def load_config_file(path) -> dict:
    with open(path) as fh:
        try:
            doc = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigurationError(f"cannot parse config file: {exc}") from exc
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ConfigurationError("config file must hold a mapping")
    return doc


def set_by_path(mapping: dict, dotted: str, value):
    """Set ``a.b.c`` in a nested dict, creating intermediate mappings."""
    keys = dotted.split(".")
    node = mapping
    for key in keys[:-1]:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ConfigurationError(f"{dotted}: {key} is not a mapping")
    node[keys[-1]] = value
