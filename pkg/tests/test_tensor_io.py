import struct

import numpy as np
import pytest

from dgp.fields import Boundary, Field, Grid
from dgp.rng import RngStream
from dgp.tensor_io import (
    BadDtypeError,
    BadMagicError,
    BadVersionError,
    TruncatedPayloadError,
    read_array,
    read_complex_array,
    read_tensor,
    write_array,
    write_complex_array,
    write_tensor,
)


def test_golden_single_value_bytes(tmp_path):
    path = tmp_path / "one.dgpt"
    write_array(path, np.ones((1, 1, 1)))
    golden = (
        b"DGPT"
        + struct.pack("<I", 1)  # version
        + bytes([0, 3])  # dtype f64, ndim 3
        + struct.pack("<QQQ", 1, 1, 1)
        + struct.pack("<d", 1.0)
    )
    assert path.read_bytes() == golden


def test_field_roundtrip_bit_exact(tmp_path):
    rng = RngStream(1)
    f = Field(Grid(8, 6, Boundary.PERIODIC), rng.standard_normal((6, 8, 3)))
    path = tmp_path / "f.dgpt"
    write_tensor(path, f)
    back = read_tensor(path)
    assert back.grid.nx == 8 and back.grid.ny == 6 and back.channels == 3
    assert np.array_equal(back.values, f.values)


def test_bad_magic(tmp_path):
    path = tmp_path / "x.dgpt"
    write_array(path, np.zeros((4, 4, 1)))
    blob = bytearray(path.read_bytes())
    blob[:4] = b"XXXX"
    path.write_bytes(bytes(blob))
    with pytest.raises(BadMagicError):
        read_array(path)


def test_bad_version(tmp_path):
    path = tmp_path / "x.dgpt"
    write_array(path, np.zeros((4, 4, 1)))
    blob = bytearray(path.read_bytes())
    blob[4] = 9
    path.write_bytes(bytes(blob))
    with pytest.raises(BadVersionError):
        read_array(path)


def test_bad_dtype(tmp_path):
    path = tmp_path / "x.dgpt"
    write_array(path, np.zeros((4, 4, 1)))
    blob = bytearray(path.read_bytes())
    blob[8] = 5
    path.write_bytes(bytes(blob))
    with pytest.raises(BadDtypeError):
        read_array(path)


def test_truncated_payload(tmp_path):
    path = tmp_path / "x.dgpt"
    write_array(path, np.zeros((4, 4, 1)))
    blob = path.read_bytes()
    path.write_bytes(blob[:-8])
    with pytest.raises(TruncatedPayloadError):
        read_array(path)


def test_complex_roundtrip(tmp_path):
    rng = RngStream(2)
    arr = rng.standard_normal((3, 4)) + 1j * rng.standard_normal((3, 4))
    path = tmp_path / "c.dgpt"
    write_complex_array(path, arr)
    assert np.array_equal(read_complex_array(path), arr)
