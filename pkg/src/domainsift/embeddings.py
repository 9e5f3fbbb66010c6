"""Dense sentence-embedding storage (EMB1) and lightweight embedders.

EMB1 file layout (all little-endian):

  bytes  0-3   magic "EMB1"
  bytes  4-5   version (u16, currently 1)
  bytes  6-9   dims (u32)
  bytes 10-17  rows (u64)
  byte  18     normalized flag (0/1: every row is unit-length)
  bytes 19-31  reserved, written as zeros
  then rows x dims float32 values, row-major

In memory an embedding matrix is a 2-D float32 ndarray; the helpers
here validate shape and finiteness at the boundaries where it matters.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .corpus import SentenceRecord
from .errors import BadMagic, IoFailure, NonFiniteInput, TruncatedFile, VersionMismatch

MAGIC = b"EMB1"
VERSION = 1
HEADER_SIZE = 32
_HEADER_STRUCT = struct.Struct("<4sHIQB13x")

NGRAM_SIZE = 3


@dataclass(frozen=True)
class EmbeddingHeader:
    dims: int
    rows: int
    normalized: bool

    def pack(self) -> bytes:
        return _HEADER_STRUCT.pack(MAGIC, VERSION, self.dims, self.rows,
                                   1 if self.normalized else 0)


def _unpack_header(raw: bytes, path) -> EmbeddingHeader:
    if len(raw) < HEADER_SIZE:
        raise BadMagic(f"{path}: file too short for an EMB1 header")
    magic, version, dims, rows, normalized = _HEADER_STRUCT.unpack(raw[:HEADER_SIZE])
    if magic != MAGIC:
        raise BadMagic(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise VersionMismatch(f"{path}: unsupported EMB1 version {version}")
    return EmbeddingHeader(dims=dims, rows=rows, normalized=bool(normalized))


def as_matrix(data) -> np.ndarray:
    """Coerce to a finite, 2-D, C-contiguous float32 matrix."""
    arr = np.ascontiguousarray(data, dtype=np.float32)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise NonFiniteInput("embedding matrix contains NaN or Inf")
    return arr


class EmbeddingWriter:
    """Streaming EMB1 writer; the row count is patched into the header on close."""

    def __init__(self, path, dims: int, normalized: bool = False):
        self.path = Path(path)
        self.dims = int(dims)
        self.normalized = normalized
        self.rows = 0
        try:
            self._fh = open(self.path, "wb")
        except OSError as exc:
            raise IoFailure(f"cannot open {path} for writing: {exc}") from exc
        self._fh.write(EmbeddingHeader(self.dims, 0, normalized).pack())

    def write(self, matrix) -> None:
        arr = as_matrix(matrix)
        if arr.shape[1] != self.dims:
            raise ValueError(f"row width {arr.shape[1]} != dims {self.dims}")
        self._fh.write(arr.tobytes())
        self.rows += arr.shape[0]

    def close(self) -> None:
        self._fh.seek(0)
        self._fh.write(EmbeddingHeader(self.dims, self.rows, self.normalized).pack())
        self._fh.close()

    def __enter__(self) -> "EmbeddingWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def write_embeddings(matrix, path, normalized: bool = False) -> None:
    """Write a whole matrix as an EMB1 file."""
    arr = as_matrix(matrix)
    with EmbeddingWriter(path, arr.shape[1], normalized) as out:
        out.write(arr)


def read_header(path) -> EmbeddingHeader:
    with open(path, "rb") as fh:
        return _unpack_header(fh.read(HEADER_SIZE), path)


def read_embeddings(path, chunk_rows: int = 65536) -> Iterator[np.ndarray]:
    """Stream an EMB1 file as float32 chunks of at most chunk_rows rows.

    The concatenation of the chunks equals the stored matrix; memory use
    is bounded by chunk_rows regardless of file size.
    """
    if chunk_rows < 1:
        raise ValueError("chunk_rows must be >= 1")
    path = Path(path)
    with open(path, "rb") as fh:
        header = _unpack_header(fh.read(HEADER_SIZE), path)
        row_bytes = header.dims * 4
        remaining = header.rows
        while remaining > 0:
            take = min(chunk_rows, remaining)
            raw = fh.read(take * row_bytes)
            if len(raw) != take * row_bytes:
                raise TruncatedFile(path, HEADER_SIZE + header.rows * row_bytes,
                                    HEADER_SIZE + (header.rows - remaining) * row_bytes + len(raw))
            yield np.frombuffer(raw, dtype="<f4").reshape(take, header.dims)
            remaining -= take


def load_embeddings(path) -> np.ndarray:
    """Read a whole EMB1 file into memory."""
    header = read_header(path)
    chunks = list(read_embeddings(path, chunk_rows=max(header.rows, 1)))
    if not chunks:
        return np.zeros((0, header.dims), dtype=np.float32)
    return chunks[0] if len(chunks) == 1 else np.concatenate(chunks)


def _ngram_bucket(ngram: str, dims: int, seed_crc: int) -> int:
    return zlib.crc32(ngram.encode("utf-8"), seed_crc) % dims


def hash_embed(records: Iterable[SentenceRecord | str], dims: int,
               seed: int = 0) -> np.ndarray:
    """Deterministic character-trigram feature-hashing embedder.

    Each sentence's trigrams are hashed (CRC-32, mixed with the seed)
    into `dims` buckets; bucket counts are L2-normalized.  Sentences
    with fewer than three characters produce zero vectors.  Pure: the
    same (records, dims, seed) always yields the same matrix, on any
    platform.  Intended as a stand-in encoder for tests and CI.
    """
    if dims < 2:
        raise ValueError("dims must be >= 2")
    seed_crc = zlib.crc32(int(seed).to_bytes(8, "little", signed=True))
    bucket_cache: dict[str, int] = {}
    rows = []
    for rec in records:
        text = rec.source if isinstance(rec, SentenceRecord) else rec
        vec = np.zeros(dims, dtype=np.float64)
        for i in range(len(text) - NGRAM_SIZE + 1):
            gram = text[i:i + NGRAM_SIZE]
            b = bucket_cache.get(gram)
            if b is None:
                b = _ngram_bucket(gram, dims, seed_crc)
                bucket_cache[gram] = b
            vec[b] += 1.0
        norm = np.sqrt((vec * vec).sum())
        if norm > 0:
            vec /= norm
        rows.append(vec.astype(np.float32))
    if not rows:
        return np.zeros((0, dims), dtype=np.float32)
    return np.vstack(rows)


def l2_normalize(matrix) -> tuple[np.ndarray, int]:
    """Scale every nonzero row to unit Euclidean norm.

    Zero rows are left as zeros (they score 0 against everything
    downstream).  Returns (normalized matrix, zero-row count).
    """
    arr = as_matrix(matrix)
    norms = np.linalg.norm(arr.astype(np.float64), axis=1)
    zero_rows = int((norms == 0.0).sum())
    safe = np.where(norms == 0.0, 1.0, norms)
    out = (arr / safe[:, None].astype(np.float32)).astype(np.float32)
    return out, zero_rows
