"""Bit-exact tensor file format.

Layout: magic "DGPT" | version u32=1 | dtype u8 (0 = f64) | ndim u8 |
dims as u64 each | payload little-endian row-major.  All header integers are
little-endian.  Fields serialize with dims (ny, nx, channels).
"""
from __future__ import annotations

import struct

import numpy as np

from .fields import Boundary, Field, Grid

MAGIC = b"DGPT"
VERSION = 1
DTYPE_F64 = 0


class TensorDecodeError(ValueError):
    """Base class for tensor-file decode failures."""


class BadMagicError(TensorDecodeError):
    pass


class BadVersionError(TensorDecodeError):
    pass


class BadDtypeError(TensorDecodeError):
    pass


class TruncatedPayloadError(TensorDecodeError):
    pass


def write_array(path, arr: np.ndarray) -> None:
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    header = MAGIC + struct.pack("<IBB", VERSION, DTYPE_F64, arr.ndim)
    header += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(arr.astype("<f8", copy=False).tobytes())


def read_array(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise BadMagicError(f"bad magic {blob[:4]!r}, expected {MAGIC!r}")
    if len(blob) < 10:
        raise TruncatedPayloadError("header truncated")
    version, dtype, ndim = struct.unpack_from("<IBB", blob, 4)
    if version != VERSION:
        raise BadVersionError(f"unsupported version {version}")
    if dtype != DTYPE_F64:
        raise BadDtypeError(f"unsupported dtype code {dtype}")
    offset = 10
    if len(blob) < offset + 8 * ndim:
        raise TruncatedPayloadError("dims truncated")
    dims = struct.unpack_from(f"<{ndim}Q", blob, offset)
    offset += 8 * ndim
    count = int(np.prod(dims, dtype=np.int64)) if ndim else 1
    if len(blob) - offset != 8 * count:
        raise TruncatedPayloadError(
            f"payload has {len(blob) - offset} bytes, expected {8 * count}"
        )
    arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
    return arr.reshape(dims).astype(np.float64)


def write_tensor(path, f: Field) -> None:
    write_array(path, f.values)


def read_tensor(path, boundary: Boundary = Boundary.PERIODIC) -> Field:
    arr = read_array(path)
    if arr.ndim != 3:
        raise TensorDecodeError(f"field tensor must have 3 dims, got {arr.ndim}")
    ny, nx, _ = arr.shape
    return Field(Grid(nx, ny, boundary), arr)


def write_complex_array(path, arr: np.ndarray) -> None:
    """Complex arrays stored as (..., 2) float64 pairs."""
    arr = np.ascontiguousarray(arr, dtype=np.complex128)
    write_array(path, arr.view(np.float64).reshape(arr.shape + (2,)))


def read_complex_array(path) -> np.ndarray:
    arr = read_array(path)
    if arr.shape[-1] != 2:
        raise TensorDecodeError("complex tensor must have trailing dim 2")
    return np.ascontiguousarray(arr).view(np.complex128).reshape(arr.shape[:-1])
