"""Self-contained BLEU and chrF2 scorers.

Conventions (documented, deliberately simple):
  * BLEU: case-folded, whitespace tokenization, orders 1-4, standard
    brevity penalty, no smoothing at corpus level.  Sentence-level BLEU
    adds 1 to numerator and denominator for orders 2-4.
  * chrF2: case-sensitive character n-grams of order 1-6 extracted
    after removing all whitespace, corpus-level aggregation, beta=2.
    Orders with no n-grams on either side are skipped.

Both return scores on a 0-100 scale.  Per-sentence sufficient
statistics are exposed so bootstrap resampling can re-score a resample
by summing rows instead of re-reading text.
"""

from __future__ import annotations

import math
from collections import Counter
from typing import Sequence

import numpy as np

from .errors import EmptyCorpus, LengthMismatch

BLEU_ORDER = 4
CHRF_ORDER = 6
CHRF_BETA = 2.0

# stats-vector layout
BLEU_STATS_WIDTH = 2 * BLEU_ORDER + 2      # matches[4], totals[4], hyp_len, ref_len
CHRF_STATS_WIDTH = 3 * CHRF_ORDER          # per order: match, hyp_total, ref_total


def _check_pairing(hypotheses: Sequence[str], references: Sequence[str]) -> None:
    if len(hypotheses) != len(references):
        raise LengthMismatch(
            f"{len(hypotheses)} hypotheses vs {len(references)} references"
        )
    if len(hypotheses) == 0:
        raise EmptyCorpus("no sentences to score")


def _ngram_counts(items: Sequence, n: int) -> Counter:
    return Counter(tuple(items[i:i + n]) for i in range(len(items) - n + 1))


def bleu_sentence_stats(hypothesis: str, reference: str) -> np.ndarray:
    """Clipped n-gram matches, totals, and lengths for one sentence pair."""
    hyp = hypothesis.casefold().split()
    ref = reference.casefold().split()
    stats = np.zeros(BLEU_STATS_WIDTH, dtype=np.int64)
    for n in range(1, BLEU_ORDER + 1):
        hyp_counts = _ngram_counts(hyp, n)
        ref_counts = _ngram_counts(ref, n)
        stats[n - 1] = sum((hyp_counts & ref_counts).values())
        stats[BLEU_ORDER + n - 1] = max(len(hyp) - n + 1, 0)
    stats[2 * BLEU_ORDER] = len(hyp)
    stats[2 * BLEU_ORDER + 1] = len(ref)
    return stats


def bleu_from_stats(stats) -> float:
    """Corpus BLEU from summed per-sentence stats (no smoothing)."""
    stats = np.asarray(stats, dtype=np.int64)
    matches = stats[:BLEU_ORDER]
    totals = stats[BLEU_ORDER:2 * BLEU_ORDER]
    hyp_len = int(stats[2 * BLEU_ORDER])
    ref_len = int(stats[2 * BLEU_ORDER + 1])
    if hyp_len == 0:
        return 0.0
    if (totals == 0).any() or (matches == 0).any():
        return 0.0
    log_prec = float(np.log(matches / totals).mean())
    bp = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    return 100.0 * bp * math.exp(log_prec)


def corpus_bleu(hypotheses: Sequence[str], references: Sequence[str]) -> float:
    _check_pairing(hypotheses, references)
    total = np.zeros(BLEU_STATS_WIDTH, dtype=np.int64)
    for hyp, ref in zip(hypotheses, references):
        total += bleu_sentence_stats(hyp, ref)
    return bleu_from_stats(total)


def sentence_bleu(hypothesis: str, reference: str) -> float:
    """Smoothed single-sentence BLEU: add-1 on orders 2-4."""
    stats = bleu_sentence_stats(hypothesis, reference)
    matches = stats[:BLEU_ORDER].astype(np.float64)
    totals = stats[BLEU_ORDER:2 * BLEU_ORDER].astype(np.float64)
    hyp_len = int(stats[2 * BLEU_ORDER])
    ref_len = int(stats[2 * BLEU_ORDER + 1])
    if hyp_len == 0 or totals[0] == 0 or matches[0] == 0:
        return 0.0
    precisions = [matches[0] / totals[0]]
    for n in range(1, BLEU_ORDER):
        precisions.append((matches[n] + 1.0) / (totals[n] + 1.0))
    log_prec = sum(math.log(p) for p in precisions) / BLEU_ORDER
    bp = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    return 100.0 * bp * math.exp(log_prec)


def chrf_sentence_stats(hypothesis: str, reference: str) -> np.ndarray:
    """Per-order character n-gram matches and totals for one pair."""
    hyp = "".join(hypothesis.split())
    ref = "".join(reference.split())
    stats = np.zeros(CHRF_STATS_WIDTH, dtype=np.int64)
    for n in range(1, CHRF_ORDER + 1):
        hyp_counts = _ngram_counts(hyp, n)
        ref_counts = _ngram_counts(ref, n)
        base = 3 * (n - 1)
        stats[base] = sum((hyp_counts & ref_counts).values())
        stats[base + 1] = max(len(hyp) - n + 1, 0)
        stats[base + 2] = max(len(ref) - n + 1, 0)
    return stats


def chrf_from_stats(stats) -> float:
    """Corpus chrF2 from summed per-sentence stats."""
    stats = np.asarray(stats, dtype=np.int64)
    precisions = []
    recalls = []
    for n in range(CHRF_ORDER):
        match, hyp_total, ref_total = (int(v) for v in stats[3 * n:3 * n + 3])
        if hyp_total + ref_total == 0:
            continue
        precisions.append(match / hyp_total if hyp_total else 0.0)
        recalls.append(match / ref_total if ref_total else 0.0)
    if not precisions:
        # no characters on either side at any order: vacuously identical
        return 100.0
    p = sum(precisions) / len(precisions)
    r = sum(recalls) / len(recalls)
    denom = CHRF_BETA ** 2 * p + r
    if denom == 0.0:
        return 0.0
    return 100.0 * (1.0 + CHRF_BETA ** 2) * p * r / denom


def chrf2(hypotheses: Sequence[str], references: Sequence[str]) -> float:
    _check_pairing(hypotheses, references)
    total = np.zeros(CHRF_STATS_WIDTH, dtype=np.int64)
    for hyp, ref in zip(hypotheses, references):
        total += chrf_sentence_stats(hyp, ref)
    return chrf_from_stats(total)
