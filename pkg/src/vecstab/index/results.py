"""Search results, recall, and the shared top-k selection rule."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class SearchIndexError(ValueError):
    """Invalid index parameters or a malformed index."""


@dataclass(frozen=True, eq=False)
class SearchResult:
    """Document ids in ascending distance order (ties by ascending id)."""

    ids: np.ndarray
    distances: np.ndarray

    def __post_init__(self):
        ids = np.asarray(self.ids, dtype=np.int64)
        dist = np.asarray(self.distances, dtype=np.float64)
        if ids.ndim != 1 or ids.shape != dist.shape:
            raise SearchIndexError("ids and distances must be 1-D and of equal length")
        if np.any(np.diff(dist) < 0):
            raise SearchIndexError("distances must be nondecreasing")
        if np.unique(ids).size != ids.size:
            raise SearchIndexError("ids must be unique")
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "distances", dist)

    def __len__(self) -> int:
        return int(self.ids.size)


def top_k(ids: np.ndarray, dist: np.ndarray, k: int) -> SearchResult:
    """The ``k`` smallest ``(distance, id)`` pairs in lexicographic order."""
    if dist.size > k:
        kth = np.partition(dist, k - 1)[k - 1]
        keep = dist <= kth
        ids, dist = ids[keep], dist[keep]
    order = np.lexsort((ids, dist))[:k]
    return SearchResult(ids[order], dist[order])


def recall_at_k(approx: SearchResult, exact: SearchResult, k: int = 10) -> float:
    """Fraction of the exact top-``k`` ids present in the approximate top-``k``."""
    if k < 1:
        raise SearchIndexError("k must be >= 1")
    if len(exact) < k:
        raise SearchIndexError(f"exact result has {len(exact)} < k = {k} entries")
    hit = np.intersect1d(approx.ids[:k], exact.ids[:k], assume_unique=True)
    return hit.size / k


def mean_recall(approx, exact, k: int = 10) -> float:
    return float(np.mean([recall_at_k(a, e, k) for a, e in zip(approx, exact, strict=True)]))
