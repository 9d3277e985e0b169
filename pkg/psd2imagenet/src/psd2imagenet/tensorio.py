"""Reader and writer for the float32 tensor interchange container.

Wire layout, all little-endian: 4-byte magic "DRMR", u16 version (1),
u8 dtype code (1 = float32), u8 rank, rank u32 dimensions, then the
payload as row-major float32.
"""

from __future__ import annotations

import os
import struct

import numpy as np

_MAGIC = b"DRMR"
_VERSION = 1
_F32 = 1
_HEAD = struct.Struct("<4sHBB")


class ContainerError(Exception):
    """Malformed or unsupported tensor file."""


def write_tensor(path, array) -> None:
    """Write an array as a float32 container; parent directory must exist."""
    # asarray keeps 0-d inputs 0-d (ascontiguousarray would promote
    # them to shape (1,) and sneak past the rank check)
    arr = np.asarray(array, dtype="<f4", order="C")
    if not 1 <= arr.ndim <= 255:
        raise ValueError("tensor rank must be between 1 and 255")
    if any(not 1 <= d <= 0xFFFFFFFF for d in arr.shape):
        raise ValueError("dimensions must be positive and fit in u32")
    with open(path, "wb") as fh:
        fh.write(_HEAD.pack(_MAGIC, _VERSION, _F32, arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(arr.tobytes())


def write_tensor_atomic(path, array) -> None:
    """Write through a temp file and rename so readers never see partials."""
    tmp = f"{path}.tmp.{os.getpid()}"
    try:
        write_tensor(tmp, array)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def read_tensor(path) -> np.ndarray:
    """Read a container back as a float32 array, validating the header."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEAD.size:
        raise ContainerError("file too short for a tensor header")
    magic, version, dtype, rank = _HEAD.unpack_from(blob, 0)
    if magic != _MAGIC:
        raise ContainerError(f"bad magic {magic!r}")
    if version != _VERSION:
        raise ContainerError(f"unsupported container version {version}")
    if dtype != _F32:
        raise ContainerError(f"unsupported dtype code {dtype}")
    if rank < 1:
        raise ContainerError("tensor rank must be at least 1")
    body = _HEAD.size + 4 * rank
    if len(blob) < body:
        raise ContainerError("file too short for the dimension list")
    shape = struct.unpack_from(f"<{rank}I", blob, _HEAD.size)
    count = int(np.prod(shape))
    if len(blob) != body + 4 * count:
        raise ContainerError(
            f"payload length {len(blob) - body} does not match shape {shape}")
    data = np.frombuffer(blob, dtype="<f4", offset=body, count=count)
    return data.reshape(shape).copy()
