"""Corpus-level diagnostics: centroid similarity and paired bootstrap.

Centroid analysis compares each rank sub-corpus to a test set by the
cosine of their mean embedding vectors.  The paired bootstrap tests
whether two systems' metric scores differ significantly: sentences are
resampled with replacement, both systems are re-scored on each
resample, and the p-value is the fraction of resamples whose score
difference fails to keep the sign of the full-corpus difference.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import metrics
from .embeddings import as_matrix
from .errors import DimsMismatch, EmptyCorpus, EmptyMatrix, LengthMismatch
from .search import cosine

BOOTSTRAP_METRICS = ("bleu", "chrf2", "sentence_bleu")


def centroid(matrix) -> np.ndarray:
    """Per-dimension arithmetic mean of the rows (float64)."""
    arr = as_matrix(matrix)
    if arr.shape[0] == 0:
        raise EmptyMatrix("cannot take the centroid of an empty matrix")
    return arr.astype(np.float64).mean(axis=0)


def centroid_similarity(sub_corpora: Sequence[np.ndarray],
                        test_set) -> list[tuple[int, float]]:
    """Cosine of each sub-corpus centroid against the test-set centroid.

    Sub-corpora are taken in rank order; returns [(rank, score), ...]
    with 1-based ranks.
    """
    ref = centroid(test_set)
    out = []
    for i, sub in enumerate(sub_corpora):
        c = centroid(sub)
        if c.shape != ref.shape:
            raise DimsMismatch(
                f"sub-corpus {i + 1} has {c.shape[0]} dims, test set {ref.shape[0]}"
            )
        out.append((i + 1, cosine(c, ref)))
    return out


def write_centroids_tsv(rank_scores: Sequence[tuple[int, float]], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("rank\tscore\n")
        for rank, score in rank_scores:
            fh.write(f"{rank}\t{score:.6f}\n")


@dataclass
class SignificanceResult:
    metric: str
    iterations: int
    sample_size: int
    alpha: float
    p_value: float
    ci_low: float
    ci_high: float
    significant: bool


def _sentence_stats(metric: str, hyp: Sequence[str], refs: Sequence[str]) -> np.ndarray:
    if metric == "bleu":
        return np.stack([metrics.bleu_sentence_stats(h, r) for h, r in zip(hyp, refs)])
    if metric == "chrf2":
        return np.stack([metrics.chrf_sentence_stats(h, r) for h, r in zip(hyp, refs)])
    if metric == "sentence_bleu":
        return np.array(
            [metrics.sentence_bleu(h, r) for h, r in zip(hyp, refs)], dtype=np.float64
        ).reshape(-1, 1)
    raise ValueError(f"unknown metric '{metric}', expected one of {BOOTSTRAP_METRICS}")


def _score_from_stats(metric: str, summed: np.ndarray, count: int) -> float:
    if metric == "bleu":
        return metrics.bleu_from_stats(summed)
    if metric == "chrf2":
        return metrics.chrf_from_stats(summed)
    return float(summed[0]) / count  # mean of per-sentence values


def _bootstrap(stats_a: np.ndarray, stats_b: np.ndarray, metric: str,
               iterations: int, sample_size: int, alpha: float,
               seed: int) -> SignificanceResult:
    count = stats_a.shape[0]
    if sample_size > count:
        raise LengthMismatch(f"sample_size {sample_size} > corpus size {count}")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")

    full_a = _score_from_stats(metric, stats_a.sum(axis=0), count)
    full_b = _score_from_stats(metric, stats_b.sum(axis=0), count)
    delta_full = full_a - full_b

    rng = np.random.default_rng(seed)
    idx = rng.integers(0, count, size=(iterations, sample_size))
    diffs = np.empty(iterations, dtype=np.float64)
    for i in range(iterations):
        take = idx[i]
        a = _score_from_stats(metric, stats_a[take].sum(axis=0), sample_size)
        b = _score_from_stats(metric, stats_b[take].sum(axis=0), sample_size)
        diffs[i] = a - b

    ci_low, ci_high = np.quantile(diffs, [alpha / 2.0, 1.0 - alpha / 2.0])
    if delta_full == 0.0:
        # sign test undefined at zero: report not significant
        p_value = 1.0
        significant = False
    else:
        sign = 1.0 if delta_full > 0 else -1.0
        p_value = float((diffs * sign <= 0.0).sum()) / iterations
        significant = p_value < alpha
    return SignificanceResult(
        metric=metric,
        iterations=iterations,
        sample_size=sample_size,
        alpha=alpha,
        p_value=p_value,
        ci_low=float(ci_low),
        ci_high=float(ci_high),
        significant=significant,
    )


def paired_bootstrap(hyp_a: Sequence[str], hyp_b: Sequence[str],
                     refs: Sequence[str], metric: str = "bleu",
                     iterations: int = 1000, sample_size: int | None = None,
                     alpha: float = 0.05, seed: int = 0) -> SignificanceResult:
    """Paired bootstrap significance test between two systems' outputs.

    Deterministic for a fixed seed.  sample_size defaults to the corpus
    size.
    """
    if len(hyp_a) != len(hyp_b):
        raise LengthMismatch(f"{len(hyp_a)} vs {len(hyp_b)} hypotheses")
    if len(hyp_a) != len(refs):
        raise LengthMismatch(f"{len(hyp_a)} hypotheses vs {len(refs)} references")
    if len(refs) == 0:
        raise EmptyCorpus("no sentences to test")
    if sample_size is None:
        sample_size = len(refs)
    stats_a = _sentence_stats(metric, hyp_a, refs)
    stats_b = _sentence_stats(metric, hyp_b, refs)
    return _bootstrap(stats_a, stats_b, metric, iterations, sample_size, alpha, seed)


def paired_bootstrap_scores(scores_a, scores_b, metric: str = "external",
                            iterations: int = 1000, sample_size: int | None = None,
                            alpha: float = 0.05, seed: int = 0) -> SignificanceResult:
    """Bootstrap over externally computed per-sentence scores (e.g. TER).

    Scores are aggregated by the mean over each resample.
    """
    a = np.asarray(scores_a, dtype=np.float64).reshape(-1, 1)
    b = np.asarray(scores_b, dtype=np.float64).reshape(-1, 1)
    if a.shape[0] != b.shape[0]:
        raise LengthMismatch(f"{a.shape[0]} vs {b.shape[0]} scores")
    if a.shape[0] == 0:
        raise EmptyCorpus("no scores to test")
    if sample_size is None:
        sample_size = a.shape[0]
    return _bootstrap(a, b, metric, iterations, sample_size, alpha, seed)


def read_score_file(path) -> np.ndarray:
    """One float per line, aligned with the corpus."""
    values = [float(line.strip()) for line in Path(path).read_text(encoding="utf-8").splitlines() if line.strip()]
    return np.asarray(values, dtype=np.float64)


def write_significance_tsv(results: Sequence[SignificanceResult], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("metric\tsample_size\tp_value\tci_low\tci_high\tsignificant\n")
        for r in results:
            fh.write(
                f"{r.metric}\t{r.sample_size}\t{r.p_value:.6f}"
                f"\t{r.ci_low:.6f}\t{r.ci_high:.6f}\t{str(r.significant).lower()}\n"
            )
