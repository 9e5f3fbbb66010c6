"""Command-line pipeline: embed, reduce, search, build, diagnose.

Subcommands: embed, pca-fit, pca-apply, select, build, centroids,
eval, significance, pipeline.  Exit codes: 0 success, 1 validation
error, 2 stage failure.

`pipeline` runs embed -> pca -> select -> build -> centroids over a
run directory, writing a resolved config copy and a run manifest with
per-stage parameter and output hashes.  A rerun skips any stage whose
parameters are unchanged and whose outputs still hash to the recorded
values.  The run directory is guarded by a .lock file.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import shlex
import shutil
import subprocess
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__, corpus, diagnostics, embeddings, metrics, pca, search, selection
from .errors import BackendUnavailable, DomainSiftError, StageFailed

log = logging.getLogger("domainsift")

BACKENDS = ("hash", "bridge", "file")
PIPELINE_STAGES = ("embed", "pca", "select", "build", "centroids")
EMBED_BATCH = 4096


class ConfigError(DomainSiftError):
    pass


@dataclass
class RunConfig:
    """Resolved pipeline configuration; every field has a validated value."""

    in_domain: str = ""
    ood_source: str = ""
    ood_target: str = ""
    out_dir: str = ""
    test_set: str = ""              # centroids reference corpus; defaults to in_domain
    backend: str = "hash"
    compare_side: str = "source"
    embedding_dims: int = 768
    hash_seed: int = 0
    bridge_cmd: str = ""
    queries_emb: str = ""           # file-backend inputs
    docs_emb: str = ""
    normalize_before_pca: bool = False
    pca_enabled: bool = True
    pca_out_dims: int = 32
    pca_sample: int = 500000
    pca_seed: int = 0
    search_n: int = 6
    chunk_rows: int = 65536
    workers: int = 1
    dedup: bool = False

    def validate(self) -> None:
        if self.backend not in BACKENDS:
            raise ConfigError(f"backend must be one of {BACKENDS}, got '{self.backend}'")
        if self.compare_side not in ("source", "target"):
            raise ConfigError(f"compare_side must be source or target, got '{self.compare_side}'")
        if not self.out_dir:
            raise ConfigError("out_dir is required")
        for key in ("in_domain", "ood_source", "ood_target"):
            value = getattr(self, key)
            if not value:
                raise ConfigError(f"{key} is required")
            if not Path(value).is_file():
                raise ConfigError(f"{key}: no such file: {value}")
        if self.test_set and not Path(self.test_set).is_file():
            raise ConfigError(f"test_set: no such file: {self.test_set}")
        if self.backend == "file":
            for key in ("queries_emb", "docs_emb"):
                value = getattr(self, key)
                if not value or not Path(value).is_file():
                    raise ConfigError(f"{key} is required for the file backend")
        if self.backend == "bridge" and not self.bridge_cmd:
            raise ConfigError("bridge_cmd is required for the bridge backend")
        if self.embedding_dims < 2:
            raise ConfigError("embedding_dims must be >= 2")
        if self.search_n < 1:
            raise ConfigError("search_n must be >= 1")
        if self.chunk_rows < 1:
            raise ConfigError("chunk_rows must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.pca_enabled:
            if self.pca_out_dims < 1:
                raise ConfigError("pca_out_dims must be >= 1")
            if self.pca_sample < self.pca_out_dims:
                raise ConfigError("pca_sample must be >= pca_out_dims")
            in_dims = self._input_dims()
            if in_dims is not None and self.pca_out_dims > in_dims:
                raise ConfigError(
                    f"pca_out_dims {self.pca_out_dims} > embedding dims {in_dims}"
                )

    def _input_dims(self) -> int | None:
        if self.backend == "hash":
            return self.embedding_dims
        if self.backend == "file":
            return embeddings.read_header(self.queries_emb).dims
        return None  # bridge: known only after encoding

    def to_text(self) -> str:
        lines = []
        for field in dataclasses.fields(self):
            value = getattr(self, field.name)
            if isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{field.name} = {value}")
        return "\n".join(lines) + "\n"


def load_config_file(path) -> dict:
    """Parse a flat `key = value` config file."""
    known = {f.name: f.type for f in dataclasses.fields(RunConfig)}
    values: dict = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in known:
            raise ConfigError(f"{path}:{lineno}: unknown config key '{key}'")
        values[key] = _coerce(key, value, path, lineno)
    return values


def _coerce(key: str, value: str, path, lineno: int):
    default = getattr(RunConfig(), key)
    if isinstance(default, bool):
        if value.lower() in ("true", "1", "yes"):
            return True
        if value.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"{path}:{lineno}: '{key}' expects true/false")
    if isinstance(default, int):
        try:
            return int(value)
        except ValueError:
            raise ConfigError(f"{path}:{lineno}: '{key}' expects an integer") from None
    return value


# ---------------------------------------------------------------------------
# embedding backends
# ---------------------------------------------------------------------------

def _hash_embed_file(text_path, out_path, dims: int, seed: int) -> None:
    handle = corpus.open_monolingual(text_path)
    handle.print_report()
    zero_rows = 0
    with embeddings.EmbeddingWriter(out_path, dims, normalized=True) as writer:
        batch: list[str] = []
        for rec in corpus.iter_records(handle):
            batch.append(rec.source)
            if len(batch) == EMBED_BATCH:
                matrix = embeddings.hash_embed(batch, dims, seed)
                zero_rows += int((np.abs(matrix).sum(axis=1) == 0).sum())
                writer.write(matrix)
                batch = []
        if batch:
            matrix = embeddings.hash_embed(batch, dims, seed)
            zero_rows += int((np.abs(matrix).sum(axis=1) == 0).sum())
            writer.write(matrix)
        if zero_rows:
            writer.normalized = False
            log.info("%s: %d zero rows (too-short sentences)", out_path, zero_rows)


def _bridge_embed_file(text_path, out_path, bridge_cmd: str) -> None:
    """Pipe a text file through an external encoder emitting EMB1 on stdout."""
    argv = shlex.split(bridge_cmd)
    if not argv:
        raise BackendUnavailable("empty bridge command")
    expected_rows = corpus.open_monolingual(text_path).line_count
    try:
        with open(text_path, "rb") as src, open(out_path, "wb") as dst:
            proc = subprocess.run(argv, stdin=src, stdout=dst,
                                  stderr=subprocess.PIPE, check=False)
    except OSError as exc:
        raise BackendUnavailable(f"cannot start bridge {argv[0]}: {exc}") from exc
    if proc.returncode != 0:
        detail = proc.stderr.decode("utf-8", "replace").strip()
        raise BackendUnavailable(f"bridge exited with {proc.returncode}: {detail}")
    try:
        header = embeddings.read_header(out_path)
    except DomainSiftError as exc:
        raise BackendUnavailable(f"bridge emitted invalid EMB1: {exc}") from exc
    if header.rows != expected_rows:
        raise BackendUnavailable(
            f"bridge emitted {header.rows} rows for {expected_rows} input lines"
        )


def _embed_one(cfg: RunConfig, text_path, out_path) -> None:
    if cfg.backend == "hash":
        _hash_embed_file(text_path, out_path, cfg.embedding_dims, cfg.hash_seed)
    elif cfg.backend == "bridge":
        _bridge_embed_file(text_path, out_path, cfg.bridge_cmd)
    else:
        raise ConfigError("file backend does not encode text")


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _params_hash(params: dict) -> str:
    return hashlib.sha256(json.dumps(params, sort_keys=True).encode()).hexdigest()


def _maybe_normalized_chunks(path, chunk_rows: int, normalize: bool):
    for chunk in embeddings.read_embeddings(path, chunk_rows):
        yield embeddings.l2_normalize(chunk)[0] if normalize else chunk


def _gather_sample_to_file(emb_paths: list, count: int, seed: int,
                           chunk_rows: int, normalize: bool, out_path) -> list[int]:
    """Sample `count` rows uniformly from the concatenated files (constant memory).

    Returns the number of sampled rows drawn from each input file.
    """
    headers = [embeddings.read_header(p) for p in emb_paths]
    dims = headers[0].dims
    total = sum(h.rows for h in headers)
    picked = np.sort(corpus.sample_indices(total, count, seed))
    per_file = []
    with embeddings.EmbeddingWriter(out_path, dims) as writer:
        offset = 0
        cursor = 0
        for path, header in zip(emb_paths, headers):
            file_end = offset + header.rows
            start_cursor = cursor
            row_base = offset
            for chunk in _maybe_normalized_chunks(path, chunk_rows, normalize):
                chunk_end = row_base + chunk.shape[0]
                hi = cursor
                while hi < len(picked) and picked[hi] < chunk_end:
                    hi += 1
                if hi > cursor:
                    local = (picked[cursor:hi] - row_base).astype(np.int64)
                    writer.write(chunk[local])
                    cursor = hi
                row_base = chunk_end
            per_file.append(cursor - start_cursor)
            offset = file_end
    return per_file


def _apply_pca_to_file(model: pca.PcaModel, in_path, out_path,
                       chunk_rows: int, normalize: bool) -> None:
    with embeddings.EmbeddingWriter(out_path, model.out_dims) as writer:
        for chunk in _maybe_normalized_chunks(in_path, chunk_rows, normalize):
            writer.write(pca.transform(chunk, model))


def _streamed_centroid(emb_chunks, model: pca.PcaModel | None) -> np.ndarray:
    total = None
    rows = 0
    for chunk in emb_chunks:
        if model is not None:
            chunk = pca.transform(chunk, model)
        if total is None:
            total = np.zeros(chunk.shape[1], dtype=np.float64)
        total += chunk.astype(np.float64).sum(axis=0)
        rows += chunk.shape[0]
    if rows == 0:
        raise DomainSiftError("cannot take the centroid of an empty corpus")
    return total / rows


def _embedded_chunks_of_text(cfg: RunConfig, text_path, tmp_path):
    """Embed a text file with the configured backend, yielding chunks."""
    _embed_one(cfg, text_path, tmp_path)
    yield from embeddings.read_embeddings(tmp_path, cfg.chunk_rows)


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------

class PipelineRun:
    """One pipeline invocation over a locked output directory."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.out_dir = Path(cfg.out_dir)
        self.manifest_path = self.out_dir / "run_manifest.json"
        self.state: dict = {"version": __version__, "stages": {}, "artifacts": {}}

    # -- state management --

    def _load_state(self) -> None:
        if self.manifest_path.exists():
            try:
                self.state = json.loads(self.manifest_path.read_text(encoding="utf-8"))
            except (OSError, ValueError):
                log.warning("run manifest unreadable, starting fresh")
        self.state.setdefault("stages", {})
        self.state.setdefault("artifacts", {})
        self.state["version"] = __version__

    def _save_state(self) -> None:
        self.manifest_path.write_text(
            json.dumps(self.state, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )

    def _resolve(self, name: str) -> Path:
        value = self.state["artifacts"][name]
        path = Path(value)
        return path if path.is_absolute() else self.out_dir / path

    def _register(self, name: str, value: str) -> None:
        self.state["artifacts"][name] = value

    def _stage_fresh(self, stage: str, params: dict, outputs: list[str]) -> bool:
        record = self.state["stages"].get(stage)
        if not record or record.get("params") != _params_hash(params):
            return False
        recorded = record.get("outputs", {})
        if set(recorded) != set(outputs):
            return False
        for rel, digest in recorded.items():
            path = self.out_dir / rel
            if not path.exists() or _sha256_file(path) != digest:
                return False
        return True

    def _finish_stage(self, stage: str, params: dict, outputs: list[str]) -> None:
        self.state["stages"][stage] = {
            "params": _params_hash(params),
            "outputs": {rel: _sha256_file(self.out_dir / rel) for rel in outputs},
        }
        self._save_state()

    # -- stages --

    def run(self) -> None:
        cfg = self.cfg
        self.out_dir.mkdir(parents=True, exist_ok=True)
        lock = self.out_dir / ".lock"
        try:
            fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise ConfigError(
                f"{lock} exists: another run owns this directory (remove if stale)"
            ) from None
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        try:
            self._load_state()
            (self.out_dir / "resolved.cfg").write_text(cfg.to_text(), encoding="utf-8")
            for stage in PIPELINE_STAGES:
                try:
                    getattr(self, f"_stage_{stage}")()
                except DomainSiftError as exc:
                    raise StageFailed(stage, exc) from exc
        finally:
            lock.unlink(missing_ok=True)

    def _stage_embed(self) -> None:
        cfg = self.cfg
        compare_file = cfg.ood_source if cfg.compare_side == "source" else cfg.ood_target
        if cfg.backend == "file":
            params = {
                "backend": "file",
                "queries_emb": _sha256_file(cfg.queries_emb),
                "docs_emb": _sha256_file(cfg.docs_emb),
            }
            embeddings.read_header(cfg.queries_emb)
            embeddings.read_header(cfg.docs_emb)
            self._register("queries_raw", str(Path(cfg.queries_emb).resolve()))
            self._register("docs_raw", str(Path(cfg.docs_emb).resolve()))
            if not self._stage_fresh("embed", params, []):
                self._finish_stage("embed", params, [])
            else:
                log.info("embed: up to date")
            return
        params = {
            "backend": cfg.backend,
            "compare_side": cfg.compare_side,
            "dims": cfg.embedding_dims,
            "hash_seed": cfg.hash_seed,
            "bridge_cmd": cfg.bridge_cmd,
            "in_domain": _sha256_file(cfg.in_domain),
            "compare": _sha256_file(compare_file),
        }
        outputs = ["queries_raw.emb", "docs_raw.emb"]
        self._register("queries_raw", "queries_raw.emb")
        self._register("docs_raw", "docs_raw.emb")
        if self._stage_fresh("embed", params, outputs):
            log.info("embed: up to date")
            return
        log.info("embed: %s backend", cfg.backend)
        _embed_one(cfg, cfg.in_domain, self.out_dir / "queries_raw.emb")
        _embed_one(cfg, compare_file, self.out_dir / "docs_raw.emb")
        self._finish_stage("embed", params, outputs)

    def _stage_pca(self) -> None:
        cfg = self.cfg
        queries_raw = self._resolve("queries_raw")
        docs_raw = self._resolve("docs_raw")
        if not cfg.pca_enabled:
            self._register("queries", self.state["artifacts"]["queries_raw"])
            self._register("docs", self.state["artifacts"]["docs_raw"])
            self.state["stages"].pop("pca", None)
            self._save_state()
            log.info("pca: disabled")
            return
        params = {
            "out_dims": cfg.pca_out_dims,
            "sample": cfg.pca_sample,
            "seed": cfg.pca_seed,
            "normalize": cfg.normalize_before_pca,
            "queries_raw": _sha256_file(queries_raw),
            "docs_raw": _sha256_file(docs_raw),
        }
        outputs = ["pca_sample.emb", "model.pca", "queries.emb", "docs.emb"]
        self._register("queries", "queries.emb")
        self._register("docs", "docs.emb")
        self._register("model", "model.pca")
        if self._stage_fresh("pca", params, outputs):
            log.info("pca: up to date")
            return
        total = sum(embeddings.read_header(p).rows for p in (queries_raw, docs_raw))
        count = min(cfg.pca_sample, total)
        sample_path = self.out_dir / "pca_sample.emb"
        per_file = _gather_sample_to_file(
            [queries_raw, docs_raw], count, cfg.pca_seed,
            cfg.chunk_rows, cfg.normalize_before_pca, sample_path,
        )
        log.info("pca: fitting on %d rows (%d in-domain, %d out-of-domain), "
                 "seed %d, pre-normalization %s",
                 count, per_file[0], per_file[1], cfg.pca_seed,
                 "on" if cfg.normalize_before_pca else "off")
        model = pca.fit_pca_stream(
            lambda: embeddings.read_embeddings(sample_path, cfg.chunk_rows),
            cfg.pca_out_dims,
        )
        pca.save_pca(model, self.out_dir / "model.pca")
        _apply_pca_to_file(model, queries_raw, self.out_dir / "queries.emb",
                           cfg.chunk_rows, cfg.normalize_before_pca)
        _apply_pca_to_file(model, docs_raw, self.out_dir / "docs.emb",
                           cfg.chunk_rows, cfg.normalize_before_pca)
        self._finish_stage("pca", params, outputs)

    def _stage_select(self) -> None:
        cfg = self.cfg
        queries_path = self._resolve("queries")
        docs_path = self._resolve("docs")
        params = {
            "n": cfg.search_n,
            "queries": _sha256_file(queries_path),
            "docs": _sha256_file(docs_path),
        }
        outputs = ["selection.tsv", "selection.npy"]
        if self._stage_fresh("select", params, outputs):
            log.info("select: up to date")
            return
        if embeddings.read_header(queries_path).rows == 0:
            raise DomainSiftError("in-domain corpus produced no query embeddings")
        docs_rows = embeddings.read_header(docs_path).rows
        if docs_rows < cfg.search_n:
            raise DomainSiftError(
                f"need at least {cfg.search_n} documents, have {docs_rows}"
            )
        log.info("select: top-%d over %d documents, %d worker(s)",
                 cfg.search_n, docs_rows, cfg.workers)
        queries = embeddings.load_embeddings(queries_path)
        result = search.top_n_search(
            queries,
            embeddings.read_embeddings(docs_path, cfg.chunk_rows),
            n=cfg.search_n,
            workers=cfg.workers,
        )
        search.write_selection_tsv(result, self.out_dir / "selection.tsv")
        packed = np.zeros(result.doc_indices.shape,
                          dtype=[("doc_index", "<i8"), ("score", "<f4")])
        packed["doc_index"] = result.doc_indices
        packed["score"] = result.scores
        np.save(self.out_dir / "selection.npy", packed)
        for line in search.search_report(result).render_lines():
            log.info("select: %s", line)
        self._finish_stage("select", params, outputs)

    def _stage_build(self) -> None:
        cfg = self.cfg
        params = {
            "dedup": cfg.dedup,
            "selection": _sha256_file(self.out_dir / "selection.tsv"),
            "ood_source": _sha256_file(cfg.ood_source),
            "ood_target": _sha256_file(cfg.ood_target),
        }
        sel = search.read_selection_tsv(self.out_dir / "selection.tsv")
        names = [f"top{r}.{ext}" for r in range(1, sel.n + 1) for ext in ("src", "tgt")]
        names += [f"mix{k}.{ext}" for k in range(1, sel.n + 1) for ext in ("src", "tgt")]
        outputs = names + ["manifest.json"]
        if self._stage_fresh("build", params, outputs):
            log.info("build: up to date")
            return
        ood = corpus.open_parallel(cfg.ood_source, cfg.ood_target)
        ood.print_report()
        log.info("build: gathering %d ranks x %d queries", sel.n, sel.rows)
        manifest = selection.build_rank_corpora(sel, ood, self.out_dir)
        manifest = selection.build_mixed_corpora(manifest, self.out_dir, dedup=cfg.dedup)
        selection.save_manifest(manifest, self.out_dir / "manifest.json")
        self._finish_stage("build", params, outputs)

    def _stage_centroids(self) -> None:
        cfg = self.cfg
        if cfg.backend == "file":
            log.info("centroids: skipped (file backend cannot embed rank corpora)")
            self.state["stages"].pop("centroids", None)
            self._save_state()
            return
        test_path = cfg.test_set or cfg.in_domain
        manifest = selection.load_manifest(self.out_dir / "manifest.json")
        params = {
            "backend": cfg.backend,
            "dims": cfg.embedding_dims,
            "hash_seed": cfg.hash_seed,
            "bridge_cmd": cfg.bridge_cmd,
            "normalize": cfg.normalize_before_pca,
            "test_set": _sha256_file(test_path),
            "manifest": _sha256_file(self.out_dir / "manifest.json"),
            "pca_enabled": cfg.pca_enabled,
        }
        if cfg.pca_enabled:
            params["model"] = _sha256_file(self._resolve("model"))
        outputs = ["centroids.tsv"]
        if self._stage_fresh("centroids", params, outputs):
            log.info("centroids: up to date")
            return
        model = pca.load_pca(self._resolve("model")) if cfg.pca_enabled else None
        tmp = self.out_dir / "centroid_tmp.emb"
        try:
            ref = _streamed_centroid(
                _embedded_chunks_of_text(cfg, test_path, tmp), model)
            scores = []
            for entry in manifest.rank_files:
                c = _streamed_centroid(
                    _embedded_chunks_of_text(cfg, self.out_dir / entry.source_path, tmp),
                    model,
                )
                scores.append((entry.rank, search.cosine(c, ref)))
        finally:
            tmp.unlink(missing_ok=True)
        diagnostics.write_centroids_tsv(scores, self.out_dir / "centroids.tsv")
        for rank, score in scores:
            log.info("centroids: rank %d -> %.6f", rank, score)
        self._finish_stage("centroids", params, outputs)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_embed(args) -> int:
    if args.backend == "file":
        embeddings.read_header(args.input)  # validates magic/version
        if Path(args.input).resolve() != Path(args.output).resolve():
            shutil.copyfile(args.input, args.output)
        return 0
    if not Path(args.input).is_file():
        raise ConfigError(f"no such file: {args.input}")
    if args.backend == "hash":
        _hash_embed_file(args.input, args.output, args.dims, args.hash_seed)
    else:
        if not args.bridge_cmd:
            raise ConfigError("--bridge-cmd is required with --backend bridge")
        _bridge_embed_file(args.input, args.output, args.bridge_cmd)
    header = embeddings.read_header(args.output)
    log.info("wrote %s: %d rows x %d dims", args.output, header.rows, header.dims)
    return 0


def cmd_pca_fit(args) -> int:
    for path in args.embeddings:
        if not Path(path).is_file():
            raise ConfigError(f"no such file: {path}")
    headers = [embeddings.read_header(p) for p in args.embeddings]
    dims = headers[0].dims
    if any(h.dims != dims for h in headers):
        raise ConfigError("embedding files disagree on dims")
    if args.out_dims > dims:
        raise ConfigError(f"--out-dims {args.out_dims} > embedding dims {dims}")
    total = sum(h.rows for h in headers)
    count = min(args.sample, total)
    if count < args.out_dims:
        raise ConfigError(f"sample of {count} rows < {args.out_dims} components")
    sample_path = Path(args.model).with_suffix(".sample.emb")
    per_file = _gather_sample_to_file(args.embeddings, count, args.seed,
                                      args.chunk_rows, args.normalize, sample_path)
    log.info("fitting on %d rows (per file: %s), seed %d", count, per_file, args.seed)
    model = pca.fit_pca_stream(
        lambda: embeddings.read_embeddings(sample_path, args.chunk_rows), args.out_dims
    )
    if not args.keep_sample:
        sample_path.unlink()
    pca.save_pca(model, args.model)
    log.info("wrote %s: %d -> %d dims", args.model, model.in_dims, model.out_dims)
    return 0


def cmd_pca_apply(args) -> int:
    model = pca.load_pca(args.model)
    header = embeddings.read_header(args.input)
    if header.dims != model.in_dims:
        raise ConfigError(
            f"embeddings have {header.dims} dims, model expects {model.in_dims}"
        )
    _apply_pca_to_file(model, args.input, args.output, args.chunk_rows, args.normalize)
    return 0


def cmd_select(args) -> int:
    q_header = embeddings.read_header(args.queries)
    d_header = embeddings.read_header(args.docs)
    if q_header.dims != d_header.dims:
        raise ConfigError(
            f"queries have {q_header.dims} dims, docs have {d_header.dims}"
        )
    if d_header.rows < args.n:
        raise ConfigError(f"need at least {args.n} documents, have {d_header.rows}")
    queries = embeddings.load_embeddings(args.queries)
    result = search.top_n_search(
        queries,
        embeddings.read_embeddings(args.docs, args.chunk_rows),
        n=args.n,
        workers=args.workers,
    )
    search.write_selection_tsv(result, args.output)
    manifest = {
        "version": __version__,
        "n": args.n,
        "queries_sha256": _sha256_file(args.queries),
        "docs_sha256": _sha256_file(args.docs),
        "selection_sha256": _sha256_file(args.output),
    }
    Path(str(args.output) + ".manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    if args.report:
        for line in search.search_report(result).render_lines():
            print(line, file=sys.stderr)
    return 0


def cmd_build(args) -> int:
    sel = search.read_selection_tsv(args.selection)
    if args.score_threshold is not None:
        log.warning("experimental score threshold %.4f: rank files may shrink",
                    args.score_threshold)
    ood = corpus.open_parallel(args.ood_source, args.ood_target)
    ood.print_report()
    out_dir = Path(args.out_dir)
    manifest = selection.build_rank_corpora(sel, ood, out_dir,
                                            min_score=args.score_threshold)
    manifest = selection.build_mixed_corpora(manifest, out_dir, dedup=args.dedup)
    selection.save_manifest(manifest, out_dir / "manifest.json")
    log.info("wrote %s", out_dir / "manifest.json")
    return 0


def cmd_centroids(args) -> int:
    test = embeddings.load_embeddings(args.test_set)
    subs = [embeddings.load_embeddings(p) for p in args.sub_corpus]
    scores = diagnostics.centroid_similarity(subs, test)
    diagnostics.write_centroids_tsv(scores, args.output)
    for rank, score in scores:
        print(f"rank {rank}: {score:.6f}", file=sys.stderr)
    return 0


def _read_lines(path) -> list[str]:
    handle = corpus.open_monolingual(path)
    return [rec.source for rec in corpus.iter_records(handle)]


def cmd_eval(args) -> int:
    hyps = _read_lines(args.hypotheses)
    refs = _read_lines(args.references)
    if args.metric == "bleu":
        score = metrics.corpus_bleu(hyps, refs)
    else:
        score = metrics.chrf2(hyps, refs)
    print(f"{args.metric}\t{score:.2f}")
    return 0


def cmd_significance(args) -> int:
    if (args.scores_a is None) != (args.scores_b is None):
        raise ConfigError("--scores-a and --scores-b must be given together")
    results = []
    for sample_size in args.sample_size:
        if args.scores_a is not None:
            result = diagnostics.paired_bootstrap_scores(
                diagnostics.read_score_file(args.scores_a),
                diagnostics.read_score_file(args.scores_b),
                metric=args.metric, iterations=args.iterations,
                sample_size=sample_size, alpha=args.alpha, seed=args.seed,
            )
        else:
            if not (args.hyp_a and args.hyp_b and args.refs):
                raise ConfigError("--hyp-a, --hyp-b and --refs are required "
                                  "unless score files are given")
            result = diagnostics.paired_bootstrap(
                _read_lines(args.hyp_a), _read_lines(args.hyp_b),
                _read_lines(args.refs), metric=args.metric,
                iterations=args.iterations, sample_size=sample_size,
                alpha=args.alpha, seed=args.seed,
            )
        results.append(result)
        verdict = "significant" if result.significant else "not significant"
        print(f"{result.metric} sample={result.sample_size}: p={result.p_value:.4f} "
              f"ci=[{result.ci_low:.4f},{result.ci_high:.4f}] {verdict}")
    if args.output:
        diagnostics.write_significance_tsv(results, args.output)
    return 0


def cmd_pipeline(args) -> int:
    values: dict = {}
    if args.config:
        values.update(load_config_file(args.config))
    for field in dataclasses.fields(RunConfig):
        override = getattr(args, field.name, None)
        if override is not None:
            values[field.name] = override
    cfg = RunConfig(**values)
    cfg.validate()
    PipelineRun(cfg).run()
    log.info("pipeline complete: %s", cfg.out_dir)
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; our contract reserves 2 for stage
    failures, so remap usage problems to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="domainsift",
                     description="select pseudo in-domain parallel data "
                                 "by embedding cosine similarity")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("embed", help="encode a text corpus into an EMB1 file")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--backend", choices=BACKENDS, default="hash")
    p.add_argument("--dims", type=int, default=768)
    p.add_argument("--hash-seed", type=int, default=0)
    p.add_argument("--bridge-cmd", default="")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("pca-fit", help="fit a PCA model on sampled embedding rows")
    p.add_argument("--embeddings", nargs="+", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out-dims", type=int, default=pca.DEFAULT_OUT_DIMS)
    p.add_argument("--sample", type=int, default=pca.DEFAULT_FIT_SAMPLE)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--chunk-rows", type=int, default=65536)
    p.add_argument("--normalize", action="store_true",
                   help="L2-normalize rows before fitting")
    p.add_argument("--keep-sample", action="store_true")
    p.set_defaults(func=cmd_pca_fit)

    p = sub.add_parser("pca-apply", help="project an EMB1 file through a PCA model")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--chunk-rows", type=int, default=65536)
    p.add_argument("--normalize", action="store_true")
    p.set_defaults(func=cmd_pca_apply)

    p = sub.add_parser("select", help="exact top-n cosine search")
    p.add_argument("--queries", required=True)
    p.add_argument("--docs", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--n", type=int, default=6)
    p.add_argument("--chunk-rows", type=int, default=65536)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--report", action="store_true",
                   help="print per-rank score statistics to stderr")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("build", help="emit rank and stacked mixed corpora")
    p.add_argument("--selection", required=True)
    p.add_argument("--ood-source", required=True)
    p.add_argument("--ood-target", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--dedup", action="store_true")
    p.add_argument("--experimental-score-threshold", dest="score_threshold",
                   type=float, default=None,
                   help="drop selected pairs scoring below this (experimental)")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("centroids", help="centroid similarity of sub-corpora vs a test set")
    p.add_argument("--test-set", required=True, help="EMB1 file of the test set")
    p.add_argument("--sub-corpus", nargs="+", required=True,
                   help="EMB1 files in rank order")
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_centroids)

    p = sub.add_parser("eval", help="score hypotheses against references")
    p.add_argument("--hypotheses", required=True)
    p.add_argument("--references", required=True)
    p.add_argument("--metric", choices=("bleu", "chrf2"), default="bleu")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("significance", help="paired bootstrap significance test")
    p.add_argument("--hyp-a")
    p.add_argument("--hyp-b")
    p.add_argument("--refs")
    p.add_argument("--scores-a", help="per-sentence score file for system A")
    p.add_argument("--scores-b", help="per-sentence score file for system B")
    p.add_argument("--metric", default="bleu")
    p.add_argument("--iterations", type=int, default=1000)
    p.add_argument("--sample-size", type=int, nargs="+", default=[None])
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", help="write significance.tsv here")
    p.set_defaults(func=cmd_significance)

    p = sub.add_parser("pipeline", help="run embed -> pca -> select -> build -> centroids")
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--in-domain", dest="in_domain")
    p.add_argument("--ood-source", dest="ood_source")
    p.add_argument("--ood-target", dest="ood_target")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--test-set", dest="test_set")
    p.add_argument("--backend", choices=BACKENDS)
    p.add_argument("--compare-side", dest="compare_side", choices=("source", "target"))
    p.add_argument("--embedding-dims", dest="embedding_dims", type=int)
    p.add_argument("--hash-seed", dest="hash_seed", type=int)
    p.add_argument("--bridge-cmd", dest="bridge_cmd")
    p.add_argument("--queries-emb", dest="queries_emb")
    p.add_argument("--docs-emb", dest="docs_emb")
    p.add_argument("--normalize-before-pca", dest="normalize_before_pca",
                   action=argparse.BooleanOptionalAction)
    p.add_argument("--pca-enabled", dest="pca_enabled",
                   action=argparse.BooleanOptionalAction)
    p.add_argument("--pca-out-dims", dest="pca_out_dims", type=int)
    p.add_argument("--pca-sample", dest="pca_sample", type=int)
    p.add_argument("--pca-seed", dest="pca_seed", type=int)
    p.add_argument("--search-n", dest="search_n", type=int)
    p.add_argument("--chunk-rows", dest="chunk_rows", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--dedup", action=argparse.BooleanOptionalAction)
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except StageFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DomainSiftError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
