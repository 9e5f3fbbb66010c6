"""EMB1 writing, self-contained on the consumer's wire format.

Layout (little-endian): magic "EMB1", version u16 (=1), dims u32,
rows u64, normalized flag u8, 13 reserved zero bytes, then rows x dims
float32 values row-major.  The header carries the final row count, so
it is emitted only once the count is known; payload rows stream after
it in input order, which keeps the output pipe-friendly.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"EMB1"
VERSION = 1
_HEADER = struct.Struct("<4sHIQB13x")


def pack_header(dims: int, rows: int, normalized: bool = False) -> bytes:
    return _HEADER.pack(MAGIC, VERSION, dims, rows, 1 if normalized else 0)


def row_bytes(matrix: np.ndarray) -> bytes:
    """Validate a batch and return its little-endian float32 payload."""
    arr = np.ascontiguousarray(matrix, dtype="<f4")
    if arr.ndim != 2:
        raise ValueError(f"encoder returned shape {arr.shape}, expected 2-D")
    if not np.isfinite(arr).all():
        raise ValueError("encoder returned NaN or Inf")
    return arr.tobytes()
