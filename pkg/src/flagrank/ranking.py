"""Deterministic score ranking, nDCG evaluation, and histogram export.

All functions here are pure; ties in score are always broken by ascending
process_id so every downstream artifact (CSV exports, metrics, query
batches) is reproducible byte for byte.
"""

import csv
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import (
    DuplicateError,
    NumericError,
    PreconditionError,
    UndefinedMetricError,
)


class ScoredProcess(NamedTuple):
    process_id: str
    error: float


@dataclass(frozen=True)
class RankedList:
    """Entries (rank, process_id, score): rank 1-based, score non-increasing."""

    entries: tuple

    def ids(self):
        return [pid for _, pid, _ in self.entries]


def rank(scores):
    """Sort descending by score; equal scores order by ascending id."""
    seen = set()
    for sp in scores:
        if not math.isfinite(sp.error):
            raise NumericError(f"non-finite score for process {sp.process_id!r}")
        if sp.process_id in seen:
            raise DuplicateError(f"duplicate process_id {sp.process_id!r} in scores")
        seen.add(sp.process_id)
    ordered = sorted(scores, key=lambda sp: (-sp.error, sp.process_id))
    return RankedList(
        entries=tuple(
            (i, sp.process_id, float(sp.error)) for i, sp in enumerate(ordered, start=1)
        )
    )


def relevance(ranked, truth):
    """Binary relevance aligned with the ranking (1 = known attack)."""
    return [1 if pid in truth.attack_ids else 0 for _, pid, _ in ranked.entries]


def dcg(rel):
    """Discounted cumulative gain: sum of rel_i / log2(i+1), i from 1."""
    for r in rel:
        if r not in (0, 1):
            raise PreconditionError("relevance entries must be 0 or 1")
    return sum(r / math.log2(i + 1) for i, r in enumerate(rel, start=1))


def ndcg(ranked, truth):
    """DCG normalized by the ideal ranking (all attacks on top).

    Undefined when the ranked set contains no attacks; that is reported as
    an error rather than silently mapped to 0.
    """
    rel = relevance(ranked, truth)
    m = sum(rel)
    if m == 0:
        raise UndefinedMetricError(
            "nDCG undefined: no ground-truth attacks present in the ranking"
        )
    ideal = [1] * m + [0] * (len(rel) - m)
    return dcg(rel) / dcg(ideal)


def error_histogram(scores, bins, threshold):
    """Equal-width histogram over [min, max] with a threshold marker.

    The last bin is right-inclusive so the maximum lands in it; when all
    scores coincide every count collapses into the first bin.
    """
    scores = list(scores)
    if not scores:
        raise PreconditionError("cannot build a histogram of zero scores")
    if bins < 1:
        raise PreconditionError("bins must be >= 1")
    arr = np.asarray(scores, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise NumericError("non-finite score in histogram input")
    lo, hi = float(arr.min()), float(arr.max())
    width = (hi - lo) / bins
    counts = [0] * bins
    if width == 0.0:
        counts[0] = len(scores)
    else:
        idx = np.floor((arr - lo) / width).astype(int)
        idx = np.clip(idx, 0, bins - 1)
        for i in idx:
            counts[i] += 1
    edges = [lo + i * width for i in range(bins)] + [hi]
    return {
        "bins": [
            {"lo": edges[i], "hi": edges[i + 1], "count": counts[i]}
            for i in range(bins)
        ],
        "threshold": float(threshold),
    }


def write_ranking_csv(fileobj, ranked, truth=None):
    """Write `rank,process_id,score[,is_attack]` rows (is_attack iff truth)."""
    writer = csv.writer(fileobj, lineterminator="\n")
    if truth is None:
        writer.writerow(["rank", "process_id", "score"])
        for r, pid, score in ranked.entries:
            writer.writerow([r, pid, repr(score)])
    else:
        writer.writerow(["rank", "process_id", "score", "is_attack"])
        for r, pid, score in ranked.entries:
            writer.writerow([r, pid, repr(score), int(pid in truth.attack_ids)])
