"""Stable content hashing for cache keys and manifest identifiers."""

from __future__ import annotations

import hashlib
import json

import numpy as np


def _canonical(obj):
    # Floats go through hex() so equal values give equal digests bit-for-bit.
    if isinstance(obj, float):
        return {"__f__": float(obj).hex()}
    if isinstance(obj, (bool, int, str)) or obj is None:
        return obj
    if isinstance(obj, np.floating):
        return {"__f__": float(obj).hex()}
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        arr = np.ascontiguousarray(obj)
        return {
            "__nd__": [list(arr.shape), arr.dtype.str,
                       hashlib.sha256(arr.tobytes()).hexdigest()],
        }
    if isinstance(obj, dict):
        return {str(k): _canonical(v) for k, v in sorted(obj.items())}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    raise TypeError(f"cannot hash object of type {type(obj)!r}")


def content_hash(obj) -> str:
    """Hex digest of a nested structure of primitives and numpy arrays."""
    payload = json.dumps(_canonical(obj), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()
