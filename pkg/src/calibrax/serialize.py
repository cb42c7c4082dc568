"""Versioned JSON save/load for models and recalibrators.

The on-disk format is plain text: a top-level envelope with a format tag,
version, the registered kind, and a ``state`` dict produced by each
class's ``to_state``.  Floats round-trip exactly through JSON (shortest
repr), so reloaded models predict bit-identically.
"""

from __future__ import annotations

import json
from pathlib import Path

from .exceptions import DataError

FORMAT_TAG = "calibrax-model"
FORMAT_VERSION = 1

_REGISTRY: dict[str, type] = {}


def register(cls: type) -> type:
    """Class decorator adding a type to the save/load registry."""
    _REGISTRY[cls.__name__] = cls
    return cls


def _lookup(kind: str) -> type:
    # models/recalibrators register lazily on first import
    from . import models, recalibrate  # noqa: F401

    for name, cls in list(_REGISTRY.items()):
        if name == kind:
            return cls
    import calibrax.models as m
    import calibrax.recalibrate as r

    for mod in (m, r):
        cls = getattr(mod, kind, None)
        if cls is not None:
            return cls
    raise DataError(f"unknown model kind {kind!r}")


def save_model(model, path) -> None:
    if not hasattr(model, "to_state"):
        raise TypeError(f"{type(model).__name__} does not support serialization")
    payload = {
        "format": FORMAT_TAG,
        "version": FORMAT_VERSION,
        "kind": type(model).__name__,
        "state": model.to_state(),
    }
    Path(path).write_text(json.dumps(payload, indent=1), encoding="utf-8")


def load_model(path):
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read model file {path}: {exc}") from exc
    if payload.get("format") != FORMAT_TAG:
        raise DataError(f"{path} is not a {FORMAT_TAG} file")
    if payload.get("version") != FORMAT_VERSION:
        raise DataError(f"unsupported model format version {payload.get('version')}")
    cls = _lookup(payload["kind"])
    return cls.from_state(payload["state"])
