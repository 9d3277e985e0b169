"""Binary tensor container and small image writers.

Layout, all little-endian: 4-byte magic "DRMR", u16 version, u8 dtype code
(1 = float32), u8 ndim, ndim u32 dimensions, then the payload as row-major
float32. Round trips are bit-exact for float32 input.
"""

from __future__ import annotations

import os
import struct

import numpy as np

MAGIC = b"DRMR"
VERSION = 1
DTYPE_F32 = 1

_HEADER = struct.Struct("<4sHBB")


class TensorFormatError(Exception):
    """Malformed or unsupported tensor container."""


def write_tensor(path, array) -> None:
    """Write an array as a float32 container; parent directory must exist."""
    # asarray keeps 0-d inputs 0-d (ascontiguousarray would promote
    # them to shape (1,) and sneak past the rank check)
    arr = np.asarray(array, dtype="<f4", order="C")
    if arr.ndim < 1 or arr.ndim > 255:
        raise ValueError("tensor rank must be between 1 and 255")
    if any(d > 0xFFFFFFFF or d < 1 for d in arr.shape):
        raise ValueError("dimensions must fit in u32 and be positive")
    header = _HEADER.pack(MAGIC, VERSION, DTYPE_F32, arr.ndim)
    dims = struct.pack(f"<{arr.ndim}I", *arr.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(dims)
        fh.write(arr.tobytes())


def read_tensor(path) -> np.ndarray:
    """Read a container back as float32; validates magic, version, dtype,
    and payload length."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise TensorFormatError("file too short for a tensor header")
    magic, version, dtype, ndim = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise TensorFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise TensorFormatError(f"unsupported container version {version}")
    if dtype != DTYPE_F32:
        raise TensorFormatError(f"unsupported dtype code {dtype}")
    if ndim < 1:
        raise TensorFormatError("tensor rank must be at least 1")
    dims_end = _HEADER.size + 4 * ndim
    if len(blob) < dims_end:
        raise TensorFormatError("file too short for the dimension list")
    shape = struct.unpack_from(f"<{ndim}I", blob, _HEADER.size)
    count = int(np.prod(shape))
    expected = dims_end + 4 * count
    if len(blob) != expected:
        raise TensorFormatError(
            f"payload length {len(blob) - dims_end} does not match "
            f"shape {shape} ({4 * count} bytes expected)")
    data = np.frombuffer(blob, dtype="<f4", offset=dims_end, count=count)
    return data.reshape(shape).copy()


def write_tensor_atomic(path, array) -> None:
    """Write via a temp file and rename, so readers never see partials."""
    tmp = f"{path}.tmp.{os.getpid()}"
    try:
        write_tensor(tmp, array)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def write_pgm(path, image) -> None:
    """8-bit binary PGM of an image in [0, 1], for quick visual checks."""
    img = np.asarray(image, dtype=float)
    if img.ndim != 2:
        raise ValueError("PGM export needs a 2-D image")
    quant = np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(quant.tobytes())
