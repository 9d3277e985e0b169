"""Binary tensor container: round trips, validation, atomicity."""

import struct

import numpy as np
import pytest

from duoris.tensorio import (TensorFormatError, read_tensor, write_pgm,
                             write_tensor, write_tensor_atomic)


def test_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    for shape in [(7,), (3, 5), (2, 70, 128), (1, 2, 3, 4)]:
        arr = rng.standard_normal(shape).astype(np.float32)
        path = tmp_path / "t.bin"
        write_tensor(path, arr)
        back = read_tensor(path)
        assert back.dtype == np.float32
        assert back.shape == arr.shape
        assert arr.tobytes() == back.tobytes()


def test_roundtrip_preserves_special_values(tmp_path):
    arr = np.array([0.0, -0.0, np.inf, -np.inf, np.nan, 1e-45],
                   dtype=np.float32)
    path = tmp_path / "t.bin"
    write_tensor(path, arr)
    assert read_tensor(path).tobytes() == arr.tobytes()


def test_float64_input_is_cast(tmp_path):
    arr = np.linspace(0, 1, 12).reshape(3, 4)
    path = tmp_path / "t.bin"
    write_tensor(path, arr)
    back = read_tensor(path)
    assert back.dtype == np.float32
    assert np.array_equal(back, arr.astype(np.float32))


def test_header_layout(tmp_path):
    arr = np.arange(6, dtype=np.float32).reshape(2, 3)
    path = tmp_path / "t.bin"
    write_tensor(path, arr)
    blob = path.read_bytes()
    assert blob[:4] == b"DRMR"
    version, dtype, ndim = struct.unpack_from("<HBB", blob, 4)
    assert (version, dtype, ndim) == (1, 1, 2)
    assert struct.unpack_from("<2I", blob, 8) == (2, 3)
    assert len(blob) == 8 + 8 + 24


def test_read_rejects_bad_magic(tmp_path):
    path = tmp_path / "t.bin"
    write_tensor(path, np.zeros(3, dtype=np.float32))
    blob = bytearray(path.read_bytes())
    blob[:4] = b"NOPE"
    path.write_bytes(bytes(blob))
    with pytest.raises(TensorFormatError):
        read_tensor(path)


def test_read_rejects_bad_version(tmp_path):
    path = tmp_path / "t.bin"
    write_tensor(path, np.zeros(3, dtype=np.float32))
    blob = bytearray(path.read_bytes())
    blob[4:6] = struct.pack("<H", 9)
    path.write_bytes(bytes(blob))
    with pytest.raises(TensorFormatError):
        read_tensor(path)


def test_read_rejects_truncation(tmp_path):
    path = tmp_path / "t.bin"
    write_tensor(path, np.zeros((4, 4), dtype=np.float32))
    blob = path.read_bytes()
    for cut in (2, 9, len(blob) - 5):
        path.write_bytes(blob[:cut])
        with pytest.raises(TensorFormatError):
            read_tensor(path)


def test_read_rejects_trailing_bytes(tmp_path):
    path = tmp_path / "t.bin"
    write_tensor(path, np.zeros(3, dtype=np.float32))
    path.write_bytes(path.read_bytes() + b"\x00")
    with pytest.raises(TensorFormatError):
        read_tensor(path)


def test_write_rejects_scalar_input(tmp_path):
    # a 0-d write is a caller bug; promoting it to shape (1,) would
    # silently change the round-tripped shape
    with pytest.raises(ValueError):
        write_tensor(tmp_path / "t.bin", np.float32(3.0))


def test_write_rejects_empty_dimension():
    with pytest.raises(ValueError):
        write_tensor("/dev/null", np.zeros((0, 3), dtype=np.float32))


def test_atomic_write_replaces_and_cleans(tmp_path):
    path = tmp_path / "t.bin"
    write_tensor_atomic(path, np.ones(4, dtype=np.float32))
    write_tensor_atomic(path, np.full(4, 2.0, dtype=np.float32))
    assert np.array_equal(read_tensor(path), np.full(4, 2.0, np.float32))
    leftovers = [p for p in tmp_path.iterdir() if p.name != "t.bin"]
    assert leftovers == []


def test_atomic_write_failure_leaves_no_temp(tmp_path):
    path = tmp_path / "t.bin"
    with pytest.raises(ValueError):
        write_tensor_atomic(path, np.zeros((0, 2), dtype=np.float32))
    assert list(tmp_path.iterdir()) == []


def test_pgm_writer(tmp_path):
    img = np.array([[0.0, 0.5], [1.0, 2.0]])
    path = tmp_path / "i.pgm"
    write_pgm(path, img)
    blob = path.read_bytes()
    assert blob.startswith(b"P5\n2 2\n255\n")
    assert blob[-4:] == bytes([0, 128, 255, 255])
    with pytest.raises(ValueError):
        write_pgm(path, np.zeros(4))
