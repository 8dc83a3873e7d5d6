"""Binary container for named tensors, used project-wide.

Layout, all little-endian:

    magic "TGT1"
    u32   tensor count
    per tensor:
        u16   name length, then that many UTF-8 bytes
        u8    ndim, then ndim u32 dims
        u8    dtype tag (0 = float32)
        payload, row-major float32

Values are stored as float32; higher-precision tensors are cast on write.
"""

from __future__ import annotations

import io
import struct
from pathlib import Path
from typing import BinaryIO

import numpy as np

from ..errors import FormatError

MAGIC = b"TGT1"
_DTYPE_F32 = 0


def write_tensors(dest: str | Path | BinaryIO, tensors: dict[str, np.ndarray]) -> None:
    if isinstance(dest, (str, Path)):
        with open(dest, "wb") as fh:
            _write(fh, tensors)
    else:
        _write(dest, tensors)


def read_tensors(src: str | Path | BinaryIO) -> dict[str, np.ndarray]:
    if isinstance(src, (str, Path)):
        with open(src, "rb") as fh:
            return _read(fh)
    return _read(src)


def _write(fh: BinaryIO, tensors: dict[str, np.ndarray]) -> None:
    fh.write(MAGIC)
    fh.write(struct.pack("<I", len(tensors)))
    for name, arr in tensors.items():
        encoded = name.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise FormatError(f"tensor name too long: {name[:32]}...")
        arr = np.asarray(arr, dtype=np.float32)
        fh.write(struct.pack("<H", len(encoded)))
        fh.write(encoded)
        fh.write(struct.pack("<B", arr.ndim))
        for dim in arr.shape:
            fh.write(struct.pack("<I", dim))
        fh.write(struct.pack("<B", _DTYPE_F32))
        fh.write(arr.astype("<f4").tobytes())


def _take(fh: BinaryIO, count: int, what: str) -> bytes:
    data = fh.read(count)
    if len(data) != count:
        raise FormatError(f"truncated tensor container while reading {what}")
    return data


def _read(fh: BinaryIO) -> dict[str, np.ndarray]:
    if _take(fh, 4, "magic") != MAGIC:
        raise FormatError("not a tensor container: bad magic bytes")
    (count,) = struct.unpack("<I", _take(fh, 4, "tensor count"))
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", _take(fh, 2, "name length"))
        name = _take(fh, name_len, "name").decode("utf-8")
        (ndim,) = struct.unpack("<B", _take(fh, 1, "ndim"))
        shape = tuple(struct.unpack("<I", _take(fh, 4, "dim"))[0] for _ in range(ndim))
        (tag,) = struct.unpack("<B", _take(fh, 1, "dtype tag"))
        if tag != _DTYPE_F32:
            raise FormatError(f"unknown dtype tag {tag} for tensor {name!r}")
        n_items = int(np.prod(shape, dtype=np.int64)) if shape else 1
        payload = _take(fh, 4 * n_items, f"payload of {name!r}")
        tensors[name] = np.frombuffer(payload, dtype="<f4").reshape(shape).copy()
    return tensors


def dumps(tensors: dict[str, np.ndarray]) -> bytes:
    buf = io.BytesIO()
    _write(buf, tensors)
    return buf.getvalue()


def loads(blob: bytes) -> dict[str, np.ndarray]:
    return _read(io.BytesIO(blob))
