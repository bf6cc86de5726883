"""Binary matrix interchange format.

Layout: 4-byte magic ``MTX1``, row count and column count as unsigned
64-bit little-endian integers, then the row-major float64 little-endian
payload.  Round trips are bit-identical.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import DataIOError

MAGIC = b"MTX1"
_HEADER = struct.Struct("<4sQQ")


def write_matrix(path, matrix) -> None:
    """Write a 2-D float64 array to ``path`` in the MTX1 format."""
    a = np.ascontiguousarray(matrix, dtype="<f8")
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D array, got ndim={a.ndim}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, a.shape[0], a.shape[1]))
        fh.write(a.tobytes())


def read_matrix(path) -> np.ndarray:
    """Read an MTX1 file back as an (rows, cols) float64 array."""
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise DataIOError(f"{path}: truncated header")
        magic, rows, cols = _HEADER.unpack(header)
        if magic != MAGIC:
            raise DataIOError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        payload = fh.read(8 * rows * cols + 1)
    if len(payload) != 8 * rows * cols:
        raise DataIOError(f"{path}: payload size mismatch for {rows}x{cols}")
    return np.frombuffer(payload, dtype="<f8").reshape(rows, cols).copy()
