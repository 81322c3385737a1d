"""Structured JSON config covering every config dataclass.

A config file is a JSON object with optional sections::

    {"sim": {...}, "sampler": {...}, "loss": {...}, "train": {...},
     "primitive": {...}, "tracker": {...}, "data": {...}, "seed": 0}

Unknown keys are rejected so typos surface as validation errors.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path
from typing import Any

from .errors import ParseError, ValidationError


def to_dict(obj) -> Any:
    if dataclasses.is_dataclass(obj):
        return {f.name: to_dict(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [to_dict(v) for v in obj]
    if isinstance(obj, dict):
        return {k: to_dict(v) for k, v in obj.items()}
    return obj


def from_dict(cls, data: dict | None, **overrides):
    """Build dataclass ``cls`` from ``data``; nested dataclass fields recurse."""
    data = dict(data or {})
    data.update({k: v for k, v in overrides.items() if v is not None})
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(names))
    if unknown:
        raise ValidationError(f"unknown {cls.__name__} keys: {', '.join(unknown)}")
    kwargs = {}
    for key, value in data.items():
        default = names[key].default
        factory = names[key].default_factory
        template = default if default is not dataclasses.MISSING else (
            factory() if factory is not dataclasses.MISSING else None)
        if dataclasses.is_dataclass(template) and isinstance(value, dict):
            value = from_dict(type(template), value)
        elif isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ValidationError(f"bad {cls.__name__}: {exc}") from None


def load_config(path) -> dict:
    p = Path(path)
    try:
        raw = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON config ({exc})", None, p) from None
    if not isinstance(raw, dict):
        raise ValidationError("config root must be a JSON object")
    return raw


def dump_config(data) -> str:
    return json.dumps(to_dict(data), indent=2, sort_keys=True) + "\n"
