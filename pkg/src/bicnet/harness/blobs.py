"""Single-tensor feature files.

Layout (little-endian): ``b"BICF"``, u32 version, u32 rank, ``rank`` u32
extents, then row-major float32 values.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError, IngestError

MAGIC = b"BICF"
VERSION = 1
_HEAD = struct.Struct("<4sII")


def encode_blob(array: np.ndarray) -> bytes:
    arr = np.asarray(array)
    if arr.ndim == 0:
        raise FormatError("blobs hold tensors of rank >= 1")
    head = _HEAD.pack(MAGIC, VERSION, arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + np.ascontiguousarray(arr, dtype="<f4").tobytes()


def decode_blob(buf: bytes, source: str = "<bytes>") -> np.ndarray:
    shape, offset = _decode_header(buf, source)
    count = int(np.prod(shape))
    expected = offset + 4 * count
    if len(buf) != expected:
        raise FormatError(f"{source}: payload is {len(buf) - offset} bytes, header {shape} needs {4 * count}")
    return np.frombuffer(buf, dtype="<f4", count=count, offset=offset).reshape(shape).astype(np.float32)


def _decode_header(buf: bytes, source: str) -> tuple[tuple[int, ...], int]:
    if len(buf) < _HEAD.size:
        raise FormatError(f"{source}: truncated header")
    magic, version, rank = _HEAD.unpack_from(buf, 0)
    if magic != MAGIC:
        raise FormatError(f"{source}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"{source}: unsupported blob version {version}")
    end = _HEAD.size + 4 * rank
    if rank == 0 or len(buf) < end:
        raise FormatError(f"{source}: truncated or empty shape header")
    return tuple(struct.unpack_from(f"<{rank}I", buf, _HEAD.size)), end


def write_blob(path: str | Path, array: np.ndarray) -> None:
    Path(path).write_bytes(encode_blob(array))


def read_blob(path: str | Path, expect_shape: tuple | None = None) -> np.ndarray:
    """Load one blob; ``expect_shape`` entries of ``None`` match any extent."""
    path = Path(path)
    if not path.is_file():
        raise IngestError(f"missing feature file {path}")
    try:
        arr = decode_blob(path.read_bytes(), str(path))
    except FormatError as exc:
        raise IngestError(str(exc)) from exc
    if expect_shape is not None:
        ok = len(expect_shape) == arr.ndim and all(e is None or e == s for e, s in zip(expect_shape, arr.shape))
        if not ok:
            want = tuple("*" if e is None else e for e in expect_shape)
            raise IngestError(f"{path}: expected shape {want}, found {arr.shape}")
    return arr
