"""Line-aligned corpus reading, validation, sampling, and writing.

Corpora are plain text files, UTF-8, one sentence per line, LF line
endings.  A parallel corpus is a pair of files (source/target) with
equal line counts.  Opening a corpus scans it once to validate the
encoding and count lines; iteration re-reads the file lazily so
handles stay cheap to keep around.

Conventions:
  * a trailing newline does not create a phantom empty final sentence;
  * empty lines are valid sentences, counted in the validation stats;
  * a trailing carriage return (CRLF input) is stripped from the
    sentence and counted in the validation stats.
"""

from __future__ import annotations

import codecs
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional

import numpy as np

from .errors import InvalidEncoding, MisalignedCorpus, SampleTooLarge

_SCAN_CHUNK = 1 << 20


@dataclass(frozen=True)
class SentenceRecord:
    """One aligned sentence (pair) with its 0-based position in the corpus."""

    index: int
    source: str
    target: Optional[str] = None


@dataclass
class ValidationStats:
    empty_lines: int = 0
    stripped_carriage_returns: int = 0

    def merged(self, other: "ValidationStats") -> "ValidationStats":
        return ValidationStats(
            self.empty_lines + other.empty_lines,
            self.stripped_carriage_returns + other.stripped_carriage_returns,
        )


@dataclass
class CorpusHandle:
    """Immutable descriptor of an opened corpus.

    role is one of 'in_domain', 'out_of_domain', 'test_set'.
    """

    source_path: Path
    target_path: Optional[Path]
    line_count: int
    role: str
    stats: ValidationStats = field(default_factory=ValidationStats)

    @property
    def is_parallel(self) -> bool:
        return self.target_path is not None

    def report_lines(self) -> list[str]:
        lines = [
            f"corpus {self.source_path} ({self.role}): {self.line_count} sentences"
        ]
        if self.stats.empty_lines:
            lines.append(f"  empty lines: {self.stats.empty_lines}")
        if self.stats.stripped_carriage_returns:
            lines.append(
                f"  carriage returns stripped: {self.stats.stripped_carriage_returns}"
            )
        return lines

    def print_report(self, stream=None) -> None:
        out = stream if stream is not None else sys.stderr
        for line in self.report_lines():
            print(line, file=out)


def _scan_file(path: Path) -> tuple[int, ValidationStats]:
    """Validate UTF-8 and count lines in one streaming pass.

    Returns (line_count, stats).  Raises InvalidEncoding with the byte
    offset of the first undecodable byte.
    """
    decoder = codecs.getincrementaldecoder("utf-8")()
    stats = ValidationStats()
    lines = 0
    offset = 0
    pending = ""  # tail of the last (possibly incomplete) line
    with open(path, "rb") as fh:
        while True:
            chunk = fh.read(_SCAN_CHUNK)
            final = not chunk
            # the decoder prepends its buffered tail to each input, so the
            # error position is relative to (buffered + chunk)
            buffered = len(decoder.getstate()[0])
            try:
                text = decoder.decode(chunk, final)
            except UnicodeDecodeError as exc:
                raise InvalidEncoding(path, offset - buffered + exc.start) from exc
            offset += len(chunk)
            if text:
                parts = (pending + text).split("\n")
                pending = parts.pop()
                for part in parts:
                    lines += 1
                    if part.endswith("\r"):
                        stats.stripped_carriage_returns += 1
                        part = part[:-1]
                    if not part:
                        stats.empty_lines += 1
            if final:
                break
    if pending:
        # final line without trailing newline
        lines += 1
        if pending.endswith("\r"):
            stats.stripped_carriage_returns += 1
            pending = pending[:-1]
        if not pending:
            stats.empty_lines += 1
    return lines, stats


def _iter_lines(path: Path) -> Iterator[str]:
    """Yield sentences in file order, newline-stripped (LF, optional CR)."""
    with open(path, "r", encoding="utf-8", newline="\n") as fh:
        for raw in fh:
            if raw.endswith("\n"):
                raw = raw[:-1]
            if raw.endswith("\r"):
                raw = raw[:-1]
            yield raw


def open_monolingual(path, role: str = "in_domain") -> CorpusHandle:
    """Open a single text file as a monolingual corpus."""
    path = Path(path)
    count, stats = _scan_file(path)
    return CorpusHandle(path, None, count, role, stats)


def open_parallel(source_path, target_path, role: str = "out_of_domain") -> CorpusHandle:
    """Open an aligned (source, target) file pair.

    Raises MisalignedCorpus when the two line counts differ, reporting
    both counts.
    """
    source_path = Path(source_path)
    target_path = Path(target_path)
    src_count, src_stats = _scan_file(source_path)
    tgt_count, tgt_stats = _scan_file(target_path)
    if src_count != tgt_count:
        raise MisalignedCorpus(src_count, tgt_count)
    return CorpusHandle(source_path, target_path, src_count, role,
                        src_stats.merged(tgt_stats))


def iter_records(handle: CorpusHandle) -> Iterator[SentenceRecord]:
    """Stream SentenceRecords in file order."""
    if handle.target_path is None:
        for i, line in enumerate(_iter_lines(handle.source_path)):
            yield SentenceRecord(i, line)
    else:
        src = _iter_lines(handle.source_path)
        tgt = _iter_lines(handle.target_path)
        for i, (s, t) in enumerate(zip(src, tgt)):
            yield SentenceRecord(i, s, t)


def sample_indices(total: int, count: int, seed: int) -> np.ndarray:
    """Uniform sample of `count` distinct indices out of `total`, in shuffled order.

    Seeded partial Fisher-Yates: exact uniformity, deterministic for a
    fixed seed, O(count) work beyond the index array.
    """
    if count > total:
        raise SampleTooLarge(f"requested {count} of {total} items")
    perm = np.arange(total, dtype=np.int64)
    if count == 0:
        return perm[:0]
    rng = np.random.default_rng(seed)
    # draw j_i uniform in [i, total) for each step in one call
    offsets = rng.integers(0, np.arange(total, total - count, -1, dtype=np.int64))
    for i in range(count):
        j = i + int(offsets[i])
        perm[i], perm[j] = perm[j], perm[i]
    return perm[:count].copy()


def sample_shuffled(handle: CorpusHandle, count: int, seed: int) -> list[SentenceRecord]:
    """Sample `count` records without replacement, in shuffled order.

    Records keep their original corpus index.
    """
    picked = sample_indices(handle.line_count, count, seed)
    wanted = set(int(i) for i in picked)
    found: dict[int, SentenceRecord] = {}
    for rec in iter_records(handle):
        if rec.index in wanted:
            found[rec.index] = rec
            if len(found) == len(wanted):
                break
    return [found[int(i)] for i in picked]


def write_parallel(records: Iterable[SentenceRecord], source_path, target_path) -> int:
    """Write records as an aligned file pair (LF endings). Returns pair count."""
    n = 0
    with open(source_path, "w", encoding="utf-8", newline="\n") as src, \
         open(target_path, "w", encoding="utf-8", newline="\n") as tgt:
        for rec in records:
            if rec.target is None:
                raise ValueError("record has no target side")
            src.write(rec.source + "\n")
            tgt.write(rec.target + "\n")
            n += 1
    return n


def write_monolingual(lines: Iterable[str], path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in lines:
            fh.write(line + "\n")
            n += 1
    return n
