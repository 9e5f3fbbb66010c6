"""Build rank sub-corpora and stacked mixed corpora from a selection.

Rank corpus r pairs query i with the out-of-domain pair at
selection.doc_indices[i, r-1]; mixed corpus k is the concatenation of
rank files 1..k, so mix(k-1) is always a line-exact prefix of mix(k).
The out-of-domain corpus is streamed once and only the needed lines
are buffered, so it never has to fit in memory.

File names are fixed: top{r}.src / top{r}.tgt and mix{k}.src /
mix{k}.tgt.  manifest.json records relative paths, pair counts, and a
SHA-256 per file.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .corpus import CorpusHandle, iter_records
from .errors import IndexOutOfRange, MissingRankFile, MissingTarget
from .search import SelectionMatrix


@dataclass
class RankFileEntry:
    rank: int
    source_path: str
    target_path: str
    pair_count: int
    checksums: dict[str, str] = field(default_factory=dict)


@dataclass
class MixedFileEntry:
    k: int
    source_path: str
    target_path: str
    pair_count: int
    duplicate_count: int
    checksums: dict[str, str] = field(default_factory=dict)


@dataclass
class SubCorpusManifest:
    n: int
    rank_files: list[RankFileEntry] = field(default_factory=list)
    mixed_files: list[MixedFileEntry] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "SubCorpusManifest":
        raw = json.loads(text)
        return cls(
            n=raw["n"],
            rank_files=[RankFileEntry(**e) for e in raw.get("rank_files", [])],
            mixed_files=[MixedFileEntry(**e) for e in raw.get("mixed_files", [])],
        )


def save_manifest(manifest: SubCorpusManifest, path) -> None:
    Path(path).write_text(manifest.to_json(), encoding="utf-8")


def load_manifest(path) -> SubCorpusManifest:
    return SubCorpusManifest.from_json(Path(path).read_text(encoding="utf-8"))


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def gather_pairs(handle: CorpusHandle, indices) -> dict[int, tuple[str, str]]:
    """Fetch (source, target) pairs for the given indices in one pass."""
    wanted = set(int(i) for i in indices)
    bad = [i for i in wanted if i < 0 or i >= handle.line_count]
    if bad:
        raise IndexOutOfRange(
            f"doc_index {min(bad)} outside corpus of {handle.line_count} lines"
        )
    found: dict[int, tuple[str, str]] = {}
    for rec in iter_records(handle):
        if rec.index in wanted:
            found[rec.index] = (rec.source, rec.target if rec.target is not None else "")
            if len(found) == len(wanted):
                break
    return found


def build_rank_corpora(selection: SelectionMatrix, ood: CorpusHandle,
                       out_dir, min_score: float | None = None) -> SubCorpusManifest:
    """Emit top{r}.src/.tgt for r in 1..n, preserving query order.

    min_score is experimental: pairs scoring below it are dropped, so
    rank files may hold fewer than `rows` pairs.
    """
    if not ood.is_parallel:
        raise MissingTarget(f"{ood.source_path} has no target side")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    pairs = gather_pairs(ood, selection.doc_indices.ravel())

    manifest = SubCorpusManifest(n=selection.n)
    for rank in range(1, selection.n + 1):
        src_name, tgt_name = f"top{rank}.src", f"top{rank}.tgt"
        kept = 0
        with open(out_dir / src_name, "w", encoding="utf-8", newline="\n") as src, \
             open(out_dir / tgt_name, "w", encoding="utf-8", newline="\n") as tgt:
            for qi in range(selection.rows):
                if min_score is not None and selection.scores[qi, rank - 1] < min_score:
                    continue
                s, t = pairs[int(selection.doc_indices[qi, rank - 1])]
                src.write(s + "\n")
                tgt.write(t + "\n")
                kept += 1
        manifest.rank_files.append(RankFileEntry(
            rank=rank,
            source_path=src_name,
            target_path=tgt_name,
            pair_count=kept,
            checksums={
                "source": _sha256(out_dir / src_name),
                "target": _sha256(out_dir / tgt_name),
            },
        ))
    return manifest


def build_mixed_corpora(manifest: SubCorpusManifest, out_dir,
                        dedup: bool = False) -> SubCorpusManifest:
    """Emit mix{k}.src/.tgt as the stacked concatenation of ranks 1..k.

    With dedup, exact (source, target) repeats after their first
    occurrence are dropped and counted; by default duplicates are kept
    so mixed corpus k holds exactly k * rows pairs.
    """
    out_dir = Path(out_dir)
    by_rank = {e.rank: e for e in manifest.rank_files}
    manifest.mixed_files = []
    for k in range(1, manifest.n + 1):
        for rank in range(1, k + 1):
            if rank not in by_rank:
                raise MissingRankFile(f"rank {rank} corpus not in manifest")
            entry = by_rank[rank]
            for rel in (entry.source_path, entry.target_path):
                if not (out_dir / rel).exists():
                    raise MissingRankFile(str(out_dir / rel))

        src_name, tgt_name = f"mix{k}.src", f"mix{k}.tgt"
        seen: set[tuple[str, str]] = set()
        kept = 0
        dropped = 0
        with open(out_dir / src_name, "w", encoding="utf-8", newline="\n") as src, \
             open(out_dir / tgt_name, "w", encoding="utf-8", newline="\n") as tgt:
            for rank in range(1, k + 1):
                entry = by_rank[rank]
                with open(out_dir / entry.source_path, encoding="utf-8") as sf, \
                     open(out_dir / entry.target_path, encoding="utf-8") as tf:
                    for s_line, t_line in zip(sf, tf):
                        if dedup:
                            pair = (s_line, t_line)
                            if pair in seen:
                                dropped += 1
                                continue
                            seen.add(pair)
                        src.write(s_line)
                        tgt.write(t_line)
                        kept += 1
        manifest.mixed_files.append(MixedFileEntry(
            k=k,
            source_path=src_name,
            target_path=tgt_name,
            pair_count=kept,
            duplicate_count=dropped,
            checksums={
                "source": _sha256(out_dir / src_name),
                "target": _sha256(out_dir / tgt_name),
            },
        ))
    return manifest


def emit_ranked_examples(selection: SelectionMatrix, in_domain: CorpusHandle,
                         ood: CorpusHandle, query_index: int) -> str:
    """Render one query's ranked matches, scores on a /100 scale."""
    if query_index < 0 or query_index >= selection.rows:
        raise IndexOutOfRange(
            f"query_index {query_index} outside selection of {selection.rows} rows"
        )
    if query_index >= in_domain.line_count:
        raise IndexOutOfRange(
            f"query_index {query_index} outside corpus of {in_domain.line_count} lines"
        )
    query_text = gather_pairs_mono(in_domain, [query_index])[query_index]
    pairs = gather_pairs(ood, selection.doc_indices[query_index])

    lines = [f"query {query_index}: {query_text}"]
    for rank in range(selection.n):
        di = int(selection.doc_indices[query_index, rank])
        score100 = float(selection.scores[query_index, rank]) * 100.0
        s, t = pairs[di]
        lines.append(f"top{rank + 1}  score={score100:.2f}  doc={di}")
        lines.append(f"  source: {s}")
        if ood.is_parallel:
            lines.append(f"  target: {t}")
    return "\n".join(lines) + "\n"


def gather_pairs_mono(handle: CorpusHandle, indices) -> dict[int, str]:
    return {i: s for i, (s, _) in gather_pairs(handle, indices).items()}
