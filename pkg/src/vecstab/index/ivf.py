"""Inverted-file index over k-means partitions."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .. import _kernels as K
from ..vectors import L2, Metric, as_dense
from .brute import prepare
from .results import SearchIndexError, SearchResult, top_k

MAX_ITER = 20
TOL = 1e-4


@dataclass(eq=False)
class IvfIndex:
    """``nlist`` centroids, each owning the ids of the documents nearest to it."""

    centroids: np.ndarray
    lists: list
    metric: Metric
    data: np.ndarray
    norms: np.ndarray

    @property
    def nlist(self) -> int:
        return self.centroids.shape[0]

    def check(self) -> None:
        """Raise unless the lists partition ``range(n)``."""
        ids = np.concatenate(self.lists) if self.lists else np.empty(0, np.int64)
        if len(self.lists) != self.nlist:
            raise SearchIndexError("one list per centroid required")
        if not np.array_equal(np.sort(ids), np.arange(self.data.shape[0])):
            raise SearchIndexError("inverted lists do not partition the database")


@numba.njit(cache=True)
def _farthest_first(code, p, data, norms, first, nlist):
    n = data.shape[0]
    chosen = np.empty(nlist, np.int64)
    chosen[0] = first
    mind = np.full(n, np.inf)
    for c in range(1, nlist):
        prev = chosen[c - 1]
        best, arg = -1.0, 0
        for i in range(n):
            d = K.pair_distance(code, p, data[i], data[prev], norms[i], norms[prev])
            if d < mind[i]:
                mind[i] = d
            if mind[i] > best:
                best, arg = mind[i], i
        chosen[c] = arg
    return chosen


@numba.njit(cache=True, parallel=True)
def _assign(code, p, data, norms, cent, cnorms):
    n = data.shape[0]
    labels = np.empty(n, np.int64)
    dist = np.empty(n)
    for i in numba.prange(n):
        best, arg = np.inf, 0
        for c in range(cent.shape[0]):
            d = K.pair_distance(code, p, data[i], cent[c], norms[i], cnorms[c])
            if d < best:
                best, arg = d, c
        labels[i] = arg
        dist[i] = best
    return labels, dist


@numba.njit(cache=True)
def _means(data, labels, nlist):
    sums = np.zeros((nlist, data.shape[1]))
    counts = np.zeros(nlist, np.int64)
    for i in range(data.shape[0]):
        c = labels[i]
        counts[c] += 1
        for j in range(data.shape[1]):
            sums[c, j] += data[i, j]
    for c in range(nlist):
        if counts[c]:
            for j in range(data.shape[1]):
                sums[c, j] /= counts[c]
    return sums, counts


def _reseed_empty(cent, counts, labels, dist, data):
    # move each empty centroid onto the farthest member of the current largest list
    dist = dist.copy()
    for c in np.flatnonzero(counts == 0):
        big = int(np.argmax(counts))
        members = np.flatnonzero(labels == big)
        far = members[np.lexsort((members, -dist[members]))[0]]
        cent[c] = data[far]
        labels[far] = c
        dist[far] = 0.0
        counts[big] -= 1
        counts[c] = 1


def ivf_build(docs, nlist: int, metric: Metric = L2, seed: int = 0) -> IvfIndex:
    """k-means (farthest-first seeding, at most 20 Lloyd rounds) then nearest-centroid lists.

    Lloyd stops early once no centroid moves more than ``1e-4`` in l2.
    """
    data, norms = prepare(docs, metric)
    n = data.shape[0]
    if not 1 <= nlist <= n:
        raise SearchIndexError(f"nlist must lie in [1, {n}], got {nlist}")
    first = int(np.random.Generator(np.random.Philox(key=int(seed))).integers(n))
    code, p = metric.code, metric.p
    cent = data[_farthest_first(code, p, data, norms, first, nlist)].copy()
    for _ in range(MAX_ITER):
        labels, dist = _assign(code, p, data, norms, cent, K.row_norms(cent))
        new, counts = _means(data, labels, nlist)
        empty = counts == 0
        new[empty] = cent[empty]
        _reseed_empty(new, counts, labels, dist, data)
        moved = float(np.max(np.linalg.norm(new - cent, axis=1)))
        cent = new
        if moved < TOL:
            break
    labels, _ = _assign(code, p, data, norms, cent, K.row_norms(cent))
    order = np.argsort(labels, kind="stable")
    bounds = np.searchsorted(labels[order], np.arange(nlist + 1))
    lists = [order[bounds[c] : bounds[c + 1]].astype(np.int64) for c in range(nlist)]
    return IvfIndex(cent, lists, metric, data, norms)


def default_nlist(n: int) -> int:
    return max(1, math.isqrt(n))


def default_nprobes(n: int) -> int:
    return max(1, math.isqrt(n) // 4)


def ivf_search(index: IvfIndex, q, nprobes: int, k: int = 10) -> SearchResult:
    """Scan the ``nprobes`` lists with the nearest centroids exhaustively."""
    if not 1 <= nprobes <= index.nlist:
        raise SearchIndexError(f"nprobes must lie in [1, {index.nlist}], got {nprobes}")
    if k < 1:
        raise SearchIndexError("k must be >= 1")
    q = np.ascontiguousarray(as_dense(q, name="query"))
    if q.size != index.data.shape[1]:
        raise SearchIndexError(f"query dim {q.size} != index dim {index.data.shape[1]}")
    code, p = index.metric.code, index.metric.p
    qn = float(K.vec_norm(q))
    cids = np.arange(index.nlist, dtype=np.int64)
    cd = K.to_rows(code, p, q, index.centroids, qn, K.row_norms(index.centroids), cids)
    probe = np.lexsort((cids, cd))[:nprobes]
    ids = np.concatenate([index.lists[c] for c in probe])
    if ids.size == 0:
        return SearchResult(ids, np.empty(0))
    d = K.to_rows(code, p, q, index.data, qn, index.norms, ids)
    return top_k(ids, d, k)


def ivf_search_batch(index: IvfIndex, queries, nprobes: int, k: int = 10) -> list[SearchResult]:
    return [ivf_search(index, q, nprobes, k) for q in np.asarray(queries, dtype=np.float64)]
