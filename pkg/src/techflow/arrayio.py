"""Binary array files ("TFA1" format).

Layout: a fixed 16-byte header -- magic ``TFA1`` (4 bytes), dtype code
(little-endian u32, 1 = float32), rank (u32), reserved u32 (zero) --
followed by ``rank`` dimension sizes as little-endian u32, then the
row-major little-endian payload.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ParseError

MAGIC = b"TFA1"
DTYPE_F32 = 1

_HEADER = struct.Struct("<4sIII")


def write_array(path, arr: np.ndarray) -> None:
    """Write a float32 array. Other dtypes are converted."""
    arr = np.ascontiguousarray(arr, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, DTYPE_F32, arr.ndim, 0))
        fh.write(struct.pack("<%dI" % arr.ndim, *arr.shape))
        fh.write(arr.tobytes())


def read_array(path) -> np.ndarray:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise ParseError(f"{path}: truncated header ({len(raw)} bytes)")
    magic, dtype, rank, _ = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise ParseError(f"{path}: bad magic {magic!r}")
    if dtype != DTYPE_F32:
        raise ParseError(f"{path}: unsupported dtype code {dtype}")
    off = _HEADER.size
    if len(raw) < off + 4 * rank:
        raise ParseError(f"{path}: truncated dimension table")
    dims = struct.unpack_from("<%dI" % rank, raw, off)
    off += 4 * rank
    n = int(np.prod(dims, dtype=np.int64)) if rank else 1
    if len(raw) != off + 4 * n:
        raise ParseError(
            f"{path}: payload size {len(raw) - off} does not match dims {dims}"
        )
    out = np.frombuffer(raw, dtype="<f4", count=n, offset=off)
    return out.reshape(dims).copy()
