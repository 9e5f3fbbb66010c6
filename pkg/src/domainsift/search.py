"""Exact top-n cosine search of query vectors against a document stream.

Both sides are L2-normalized once, so scoring is a blocked float32
matrix product.  Results are reproducible by construction:

  * the incoming document stream is re-buffered into fixed-size blocks
    (SEARCH_BLOCK_ROWS), so the matmul shapes, and therefore the exact
    float32 rounding, do not depend on the caller's chunk size;
  * per-block top-n candidates are selected with a packed (score,
    doc_index) sort key, so ties always resolve to the smaller index;
  * blocks are merged in stream order, so the worker count cannot
    change the outcome.

Ranking order everywhere: score descending, then doc_index ascending.
"""

from __future__ import annotations

from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .embeddings import as_matrix, l2_normalize
from .errors import DimsMismatch, InsufficientDocs

SEARCH_BLOCK_ROWS = 4096  # must stay <= _KEY_CAP for the packed sort key
_KEY_CAP = 8192
_QUERY_BATCH = 8192
HISTOGRAM_BUCKET_WIDTH = 0.01


def cosine(q, d) -> float:
    """Cosine similarity of two vectors; 0.0 when either norm is zero."""
    qa = np.asarray(q, dtype=np.float64).ravel()
    da = np.asarray(d, dtype=np.float64).ravel()
    if qa.shape != da.shape:
        raise DimsMismatch(f"vector dims differ: {qa.shape[0]} vs {da.shape[0]}")
    nq = np.linalg.norm(qa)
    nd = np.linalg.norm(da)
    if nq == 0.0 or nd == 0.0:
        return 0.0
    return float(qa @ da / (nq * nd))


@dataclass
class SelectionMatrix:
    """Per-query ranked matches: row i holds query i's top n documents."""

    n: int
    doc_indices: np.ndarray  # int64[rows, n]
    scores: np.ndarray       # float32[rows, n], non-increasing along each row

    @property
    def rows(self) -> int:
        return self.doc_indices.shape[0]

    def validate(self) -> None:
        assert self.doc_indices.shape == self.scores.shape == (self.rows, self.n)
        for r in range(self.rows):
            row_idx = self.doc_indices[r]
            row_sc = self.scores[r]
            assert len(set(row_idx.tolist())) == self.n, f"row {r}: duplicate doc_index"
            for c in range(self.n - 1):
                assert row_sc[c] > row_sc[c + 1] or (
                    row_sc[c] == row_sc[c + 1] and row_idx[c] < row_idx[c + 1]
                ), f"row {r}: order violated at column {c}"


def _float_order_key(scores: np.ndarray) -> np.ndarray:
    """Map float32 to int32 preserving numeric order (-0.0 folds to +0.0)."""
    bits = (scores + np.float32(0.0)).view(np.int32)
    return np.where(bits >= 0, bits, bits ^ np.int32(0x7FFFFFFF))


def _block_topn(scores: np.ndarray, n: int, base_index: int) -> tuple[np.ndarray, np.ndarray]:
    """Exact top-n of one score block, ties to the smaller column.

    The packed key gives every (score, column) pair a distinct int64, so
    argpartition cannot split ties arbitrarily.  Requires block width
    <= _KEY_CAP.
    """
    b = scores.shape[1]
    key = _float_order_key(scores).astype(np.int64) << 13
    key += np.int64(_KEY_CAP) - np.arange(b, dtype=np.int64)
    m = min(n, b)
    part = np.argpartition(-key, m - 1, axis=1)[:, :m]
    order = np.argsort(-np.take_along_axis(key, part, 1), axis=1)
    cols = np.take_along_axis(part, order, 1)
    return (
        base_index + cols.astype(np.int64),
        np.take_along_axis(scores, cols, 1),
    )


def _merge_topn(cur_idx, cur_sc, new_idx, new_sc, n):
    """Keep the best n of two candidate sets, (score desc, index asc)."""
    idx = np.concatenate([cur_idx, new_idx], axis=1)
    sc = np.concatenate([cur_sc, new_sc], axis=1)
    o1 = np.argsort(idx, axis=1, kind="stable")
    idx = np.take_along_axis(idx, o1, 1)
    sc = np.take_along_axis(sc, o1, 1)
    o2 = np.argsort(-sc, axis=1, kind="stable")
    idx = np.take_along_axis(idx, o2, 1)
    sc = np.take_along_axis(sc, o2, 1)
    return idx[:, :n], sc[:, :n]


def _reblock(chunks: Iterable[np.ndarray], block_rows: int, dims: int) -> Iterator[np.ndarray]:
    """Re-buffer a chunk stream into blocks of exactly block_rows rows
    (final block excepted); the block sequence depends only on the
    concatenated content."""
    parts: list[np.ndarray] = []
    filled = 0
    for chunk in chunks:
        arr = as_matrix(chunk)
        if arr.shape[1] != dims:
            raise DimsMismatch(
                f"document chunk has {arr.shape[1]} dims, queries have {dims}"
            )
        pos = 0
        while pos < arr.shape[0]:
            take = min(block_rows - filled, arr.shape[0] - pos)
            parts.append(arr[pos:pos + take])
            filled += take
            pos += take
            if filled == block_rows:
                yield parts[0] if len(parts) == 1 else np.concatenate(parts)
                parts, filled = [], 0
    if filled:
        yield parts[0] if len(parts) == 1 else np.concatenate(parts)


def _search_block(queries_n: np.ndarray, block: np.ndarray, base_index: int,
                  n: int) -> tuple[np.ndarray, np.ndarray]:
    block_n, _ = l2_normalize(block)
    q = queries_n.shape[0]
    m = min(n, block_n.shape[0])
    idx = np.empty((q, m), dtype=np.int64)
    sc = np.empty((q, m), dtype=np.float32)
    for s in range(0, q, _QUERY_BATCH):
        scores = queries_n[s:s + _QUERY_BATCH] @ block_n.T
        bi, bs = _block_topn(scores, n, base_index)
        idx[s:s + bi.shape[0]] = bi
        sc[s:s + bs.shape[0]] = bs
    return idx, sc


def top_n_search(queries, docs: Iterable[np.ndarray], n: int = 6,
                 workers: int = 1) -> SelectionMatrix:
    """For every query, the n highest-cosine documents over the whole stream.

    `docs` is an iterable of matrix chunks (any chunking); a single
    matrix is accepted too.  Equivalent to scoring every (query, doc)
    pair and fully sorting each row by (score desc, doc_index asc).
    """
    queries_n, _ = l2_normalize(as_matrix(queries))
    if n < 1:
        raise ValueError("n must be >= 1")
    if workers < 1:
        raise ValueError("workers must be >= 1")
    if isinstance(docs, np.ndarray):
        docs = [docs]
    q = queries_n.shape[0]
    cur_idx = np.empty((q, 0), dtype=np.int64)
    cur_sc = np.empty((q, 0), dtype=np.float32)
    total_docs = 0
    with ThreadPoolExecutor(max_workers=workers) as pool:
        pending: deque = deque()
        for block in _reblock(docs, SEARCH_BLOCK_ROWS, queries_n.shape[1]):
            pending.append(pool.submit(_search_block, queries_n, block, total_docs, n))
            total_docs += block.shape[0]
            if len(pending) >= workers * 2:
                new_idx, new_sc = pending.popleft().result()
                cur_idx, cur_sc = _merge_topn(cur_idx, cur_sc, new_idx, new_sc, n)
        while pending:
            new_idx, new_sc = pending.popleft().result()
            cur_idx, cur_sc = _merge_topn(cur_idx, cur_sc, new_idx, new_sc, n)
    if total_docs < n:
        raise InsufficientDocs(f"need at least {n} documents, stream had {total_docs}")
    return SelectionMatrix(n=n, doc_indices=cur_idx, scores=cur_sc)


@dataclass
class RankStats:
    rank: int
    mean: float
    min: float
    max: float


@dataclass
class SearchReport:
    """Per-rank score statistics plus a histogram of all scores."""

    rows: int
    per_rank: list[RankStats] = field(default_factory=list)
    histogram: list[tuple[float, int]] = field(default_factory=list)  # (bucket low edge, count)

    def render_lines(self) -> list[str]:
        lines = [f"selection rows: {self.rows}"]
        for st in self.per_rank:
            lines.append(
                f"rank {st.rank}: mean={st.mean:.6f} min={st.min:.6f} max={st.max:.6f}"
            )
        for low, count in self.histogram:
            lines.append(f"bucket [{low:.2f},{low + HISTOGRAM_BUCKET_WIDTH:.2f}): {count}")
        return lines


def search_report(selection: SelectionMatrix) -> SearchReport:
    """Summarize a selection: per-rank mean/min/max and 0.01-wide buckets."""
    report = SearchReport(rows=selection.rows)
    if selection.rows == 0:
        return report
    sc = selection.scores.astype(np.float64)
    for rank in range(selection.n):
        col = sc[:, rank]
        report.per_rank.append(
            RankStats(rank + 1, float(col.mean()), float(col.min()), float(col.max()))
        )
    buckets = np.clip(np.floor((sc.ravel() + 1.0) / HISTOGRAM_BUCKET_WIDTH), 0, 199).astype(int)
    counts = np.bincount(buckets, minlength=200)
    for b in np.nonzero(counts)[0]:
        report.histogram.append((b * HISTOGRAM_BUCKET_WIDTH - 1.0, int(counts[b])))
    return report


def write_selection_tsv(selection: SelectionMatrix, path) -> None:
    """One line per (query, rank): query_index, rank, doc_index, score."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for qi in range(selection.rows):
            for rank in range(selection.n):
                fh.write(
                    f"{qi}\t{rank + 1}\t{selection.doc_indices[qi, rank]}"
                    f"\t{selection.scores[qi, rank]:.6f}\n"
                )


def read_selection_tsv(path) -> SelectionMatrix:
    path = Path(path)
    rows: list[list[tuple[int, float]]] = []
    n = None
    for lineno, line in enumerate(open(path, encoding="utf-8"), start=1):
        parts = line.rstrip("\n").split("\t")
        if len(parts) != 4:
            raise ValueError(f"{path}:{lineno}: expected 4 columns")
        qi, rank, di, score = int(parts[0]), int(parts[1]), int(parts[2]), float(parts[3])
        if rank == 1:
            if qi != len(rows):
                raise ValueError(f"{path}:{lineno}: query_index out of order")
            rows.append([])
        if qi != len(rows) - 1 or rank != len(rows[-1]) + 1:
            raise ValueError(f"{path}:{lineno}: rank sequence broken")
        rows[-1].append((di, score))
        if n is None or rank > n:
            n = rank
    if n is None:
        raise ValueError(f"{path}: empty selection file")
    if any(len(r) != n for r in rows):
        raise ValueError(f"{path}: ragged selection rows")
    idx = np.array([[d for d, _ in r] for r in rows], dtype=np.int64)
    sc = np.array([[s for _, s in r] for r in rows], dtype=np.float32)
    return SelectionMatrix(n=n, doc_indices=idx, scores=sc)
