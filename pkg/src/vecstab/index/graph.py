"""Layered proximity-graph index (HNSW-style) compiled with numba.

Construction follows the usual recipe: geometric level sampling with
normalisation ``1 / ln(M)``, greedy descent through the upper layers, an
``ef_construction`` beam per layer, and up to ``M`` neighbours per node and
layer chosen from the beam. Lists are capped at ``M`` above the base layer
and ``2M`` at it; an overflowing list re-runs the neighbour selection.

Every comparison orders by ``(distance, id)``, so builds and searches are
deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .. import _kernels as K
from ..vectors import L2, Metric, as_dense, as_matrix
from .brute import prepare
from .results import SearchIndexError, SearchResult


@dataclass(eq=False)
class GraphIndex:
    """Adjacency for every layer plus the entry point.

    Base-layer lists live in ``nbr0`` (``n`` rows of width ``2M``). A node on
    level ``L > 0`` owns rows ``up_start[node] .. up_start[node] + L - 1`` of
    ``nbr_up`` (width ``M``), one per upper layer. ``deg*`` hold list lengths
    and ``dist*`` the matching edge lengths.
    """

    data: np.ndarray
    norms: np.ndarray
    metric: Metric
    M: int
    ef_construction: int
    levels: np.ndarray
    entry: int
    nbr0: np.ndarray
    dist0: np.ndarray
    deg0: np.ndarray
    up_start: np.ndarray
    nbr_up: np.ndarray
    dist_up: np.ndarray
    deg_up: np.ndarray
    heuristic: bool = True

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def max_level(self) -> int:
        return int(self.levels[self.entry])

    def neighbors(self, node: int, layer: int = 0) -> np.ndarray:
        if layer == 0:
            return self.nbr0[node, : self.deg0[node]]
        if not 0 < layer <= self.levels[node]:
            raise SearchIndexError(f"node {node} has no layer {layer}")
        row = self.up_start[node] + layer - 1
        return self.nbr_up[row, : self.deg_up[row]]

    def check(self) -> None:
        """Raise unless degree caps, edge validity and level consistency hold."""
        n = self.n
        if not 0 <= self.entry < n or self.levels[self.entry] != self.levels.max():
            raise SearchIndexError("entry point must exist on the top level")
        if np.any(self.deg0 > 2 * self.M) or np.any(self.deg_up > self.M):
            raise SearchIndexError("degree cap exceeded")
        for node in range(n):
            for layer in range(int(self.levels[node]) + 1):
                nb = self.neighbors(node, layer)
                if np.any((nb < 0) | (nb >= n)) or np.any(nb == node):
                    raise SearchIndexError(f"invalid edge at node {node}, layer {layer}")
                if np.any(self.levels[nb] < layer):
                    raise SearchIndexError(f"edge to a node absent from layer {layer}")


# ----------------------------------------------------------------------------
# heaps over parallel (distance, id) arrays, ordered lexicographically


@numba.njit(cache=True, inline="always")
def _less(da, ia, db, ib):
    return da < db or (da == db and ia < ib)


@numba.njit(cache=True)
def _push(hd, hi, size, d, i, is_max):
    pos = size
    hd[pos] = d
    hi[pos] = i
    while pos > 0:
        parent = (pos - 1) >> 1
        if is_max:
            up = _less(hd[parent], hi[parent], hd[pos], hi[pos])
        else:
            up = _less(hd[pos], hi[pos], hd[parent], hi[parent])
        if not up:
            break
        hd[pos], hd[parent] = hd[parent], hd[pos]
        hi[pos], hi[parent] = hi[parent], hi[pos]
        pos = parent
    return size + 1


@numba.njit(cache=True)
def _pop(hd, hi, size, is_max):
    size -= 1
    hd[0] = hd[size]
    hi[0] = hi[size]
    pos = 0
    while True:
        left = 2 * pos + 1
        if left >= size:
            break
        best = left
        right = left + 1
        if right < size:
            if is_max:
                if _less(hd[left], hi[left], hd[right], hi[right]):
                    best = right
            elif _less(hd[right], hi[right], hd[left], hi[left]):
                best = right
        if is_max:
            down = _less(hd[pos], hi[pos], hd[best], hi[best])
        else:
            down = _less(hd[best], hi[best], hd[pos], hi[pos])
        if not down:
            break
        hd[pos], hd[best] = hd[best], hd[pos]
        hi[pos], hi[best] = hi[best], hi[pos]
        pos = best
    return size


# ----------------------------------------------------------------------------
# core routines


@numba.njit(cache=True)
def _search_layer(
    code, p, data, norms, q, qn, eps, ef, layer,
    nbr0, deg0, up_start, nbr_up, deg_up,
    visited, epoch, cd, ci, wd, wi,
):
    """Beam search on one layer; returns ``(dists, ids)`` ascending."""
    nc = 0
    nw = 0
    for t in range(eps.shape[0]):
        e = eps[t]
        visited[e] = epoch
        d = K.pair_distance(code, p, q, data[e], qn, norms[e])
        nc = _push(cd, ci, nc, d, e, False)
        nw = _push(wd, wi, nw, d, e, True)
        if nw > ef:
            nw = _pop(wd, wi, nw, True)
    while nc > 0:
        dc, c = cd[0], ci[0]
        nc = _pop(cd, ci, nc, False)
        if _less(wd[0], wi[0], dc, c):
            break
        if layer == 0:
            deg = deg0[c]
        else:
            row = up_start[c] + layer - 1
            deg = deg_up[row]
        for t in range(deg):
            e = nbr0[c, t] if layer == 0 else nbr_up[row, t]
            if visited[e] == epoch:
                continue
            visited[e] = epoch
            d = K.pair_distance(code, p, q, data[e], qn, norms[e])
            if nw < ef or _less(d, e, wd[0], wi[0]):
                nc = _push(cd, ci, nc, d, e, False)
                nw = _push(wd, wi, nw, d, e, True)
                if nw > ef:
                    nw = _pop(wd, wi, nw, True)
    out_d = np.empty(nw)
    out_i = np.empty(nw, np.int64)
    for t in range(nw - 1, -1, -1):
        out_d[t] = wd[0]
        out_i[t] = wi[0]
        nw = _pop(wd, wi, nw, True)
    return out_d, out_i


@numba.njit(cache=True)
def _diversify(code, p, data, norms, ids, ds, cap, out_i, out_d):
    """Keep candidate ``e`` (ascending order) unless an already kept ``r`` is
    closer to ``e`` than the base point is. Returns the number kept."""
    kept = 0
    for t in range(ids.shape[0]):
        if kept == cap:
            break
        e = ids[t]
        ok = True
        for s in range(kept):
            r = out_i[s]
            if K.pair_distance(code, p, data[e], data[r], norms[e], norms[r]) < ds[t]:
                ok = False
                break
        if ok:
            out_i[kept] = e
            out_d[kept] = ds[t]
            kept += 1
    return kept


@numba.njit(cache=True)
def _link(code, p, data, norms, lst, dst, deg, cap, d, node, heuristic):
    """Add ``node`` to a list; when full, re-select among members plus ``node``."""
    if deg < cap:
        lst[deg] = node
        dst[deg] = d
        return deg + 1
    if heuristic:
        ids = np.empty(deg + 1, np.int64)
        ds = np.empty(deg + 1)
        ids[:deg] = lst[:deg]
        ds[:deg] = dst[:deg]
        ids[deg] = node
        ds[deg] = d
        order = np.argsort(ids, kind="mergesort")
        order = order[np.argsort(ds[order], kind="mergesort")]
        return _diversify(code, p, data, norms, ids[order], ds[order], cap, lst, dst)
    worst = 0
    for t in range(1, deg):
        if _less(dst[worst], lst[worst], dst[t], lst[t]):
            worst = t
    if _less(d, node, dst[worst], lst[worst]):
        lst[worst] = node
        dst[worst] = d
    return deg


@numba.njit(cache=True)
def _build(code, p, data, norms, levels, up_start, M, efc, heuristic):
    n = data.shape[0]
    cap0 = 2 * M
    n_up = 0
    for i in range(n):
        n_up += levels[i]
    nbr0 = np.full((n, cap0), -1, np.int64)
    dist0 = np.zeros((n, cap0))
    deg0 = np.zeros(n, np.int64)
    nbr_up = np.full((max(n_up, 1), M), -1, np.int64)
    dist_up = np.zeros((max(n_up, 1), M))
    deg_up = np.zeros(max(n_up, 1), np.int64)
    visited = np.zeros(n, np.int64)
    cd = np.empty(n + 1)
    ci = np.empty(n + 1, np.int64)
    wd = np.empty(efc + 2)
    wi = np.empty(efc + 2, np.int64)
    entry = 0
    top = levels[0]
    epoch = 0
    eps = np.empty(1, np.int64)
    for i in range(1, n):
        q = data[i]
        qn = norms[i]
        li = levels[i]
        eps = np.empty(1, np.int64)
        eps[0] = entry
        for layer in range(top, li, -1):
            epoch += 1
            _, ids = _search_layer(code, p, data, norms, q, qn, eps, 1, layer,
                                   nbr0, deg0, up_start, nbr_up, deg_up, visited, epoch, cd, ci, wd, wi)
            eps = ids[:1].copy()
        for layer in range(min(li, top), -1, -1):
            epoch += 1
            ds, ids = _search_layer(code, p, data, norms, q, qn, eps, efc, layer,
                                    nbr0, deg0, up_start, nbr_up, deg_up, visited, epoch, cd, ci, wd, wi)
            if layer == 0:
                own_i, own_d = nbr0[i], dist0[i]
            else:
                own_i, own_d = nbr_up[up_start[i] + layer - 1], dist_up[up_start[i] + layer - 1]
            if heuristic:
                keep = _diversify(code, p, data, norms, ids, ds, M, own_i, own_d)
            else:
                keep = min(M, ids.shape[0])
                own_i[:keep] = ids[:keep]
                own_d[:keep] = ds[:keep]
            for t in range(keep):
                e = own_i[t]
                if layer == 0:
                    deg0[e] = _link(code, p, data, norms, nbr0[e], dist0[e], deg0[e], cap0, own_d[t], i, heuristic)
                else:
                    row_e = up_start[e] + layer - 1
                    deg_up[row_e] = _link(
                        code, p, data, norms, nbr_up[row_e], dist_up[row_e], deg_up[row_e], M, own_d[t], i, heuristic
                    )
            if layer == 0:
                deg0[i] = keep
            else:
                deg_up[up_start[i] + layer - 1] = keep
            eps = ids
        if li > top:
            top = li
            entry = i
    return entry, nbr0, dist0, deg0, nbr_up, dist_up, deg_up


@numba.njit(cache=True)
def _query(code, p, data, norms, q, qn, entry, top, ef,
           nbr0, deg0, up_start, nbr_up, deg_up, visited, epoch, cd, ci, wd, wi):
    eps = np.empty(1, np.int64)
    eps[0] = entry
    for layer in range(top, 0, -1):
        epoch += 1
        _, ids = _search_layer(code, p, data, norms, q, qn, eps, 1, layer,
                               nbr0, deg0, up_start, nbr_up, deg_up, visited, epoch, cd, ci, wd, wi)
        eps = ids[:1].copy()
    epoch += 1
    ds, ids = _search_layer(code, p, data, norms, q, qn, eps, ef, 0,
                            nbr0, deg0, up_start, nbr_up, deg_up, visited, epoch, cd, ci, wd, wi)
    return ds, ids, epoch


def sample_levels(n: int, M: int, seed: int) -> np.ndarray:
    """``floor(-ln(U) / ln(M))`` with ``U`` uniform on ``(0, 1]``."""
    u = 1.0 - np.random.Generator(np.random.Philox(key=int(seed))).random(n)
    return np.floor(-np.log(u) / np.log(M)).astype(np.int64)


def graph_build(
    docs,
    M: int = 16,
    ef_construction: int = 200,
    metric: Metric = L2,
    seed: int = 0,
    *,
    heuristic: bool = True,
) -> GraphIndex:
    """Insert documents in id order into a layered graph.

    With ``heuristic=False`` each node keeps its ``M`` closest candidates. The
    default applies the usual diversification rule instead: a candidate is
    dropped when an already selected neighbour is closer to it than the node
    is. Without it, well-separated clusters end up as disconnected components
    and greedy descent can strand a query in the wrong one.
    """
    if M < 2:
        raise SearchIndexError("M must be >= 2")
    if ef_construction < 1:
        raise SearchIndexError("ef_construction must be >= 1")
    if len(docs) == 0:
        raise SearchIndexError("cannot build a graph over an empty database")
    data, norms = prepare(docs, metric)
    levels = sample_levels(data.shape[0], M, seed)
    up_start = np.full(levels.size, -1, np.int64)
    has_up = levels > 0
    up_start[has_up] = np.concatenate([[0], np.cumsum(levels[has_up])[:-1]])
    entry, nbr0, dist0, deg0, nbr_up, dist_up, deg_up = _build(
        metric.code, metric.p, data, norms, levels, up_start, int(M), int(ef_construction), bool(heuristic)
    )
    return GraphIndex(data, norms, metric, int(M), int(ef_construction), levels, int(entry),
                      nbr0, dist0, deg0, up_start, nbr_up, dist_up, deg_up, bool(heuristic))


class _Searcher:
    """Scratch buffers reused across queries against one index."""

    def __init__(self, index: GraphIndex, ef: int):
        n = index.n
        self.visited = np.zeros(n, np.int64)
        self.epoch = 0
        self.cd = np.empty(n + 1)
        self.ci = np.empty(n + 1, np.int64)
        self.wd = np.empty(ef + 2)
        self.wi = np.empty(ef + 2, np.int64)

    def run(self, index: GraphIndex, q: np.ndarray, ef: int, k: int) -> SearchResult:
        ds, ids, self.epoch = _query(
            index.metric.code, index.metric.p, index.data, index.norms, q, float(K.vec_norm(q)),
            index.entry, index.max_level, ef, index.nbr0, index.deg0, index.up_start,
            index.nbr_up, index.deg_up, self.visited, self.epoch, self.cd, self.ci, self.wd, self.wi,
        )
        return SearchResult(ids[:k], ds[:k])


def _check_search(index: GraphIndex, ef_search: int, k: int) -> None:
    if k < 1:
        raise SearchIndexError("k must be >= 1")
    if k > ef_search:
        raise SearchIndexError(f"k = {k} exceeds ef_search = {ef_search}")


def graph_search(index: GraphIndex, q, ef_search: int = 200, k: int = 10) -> SearchResult:
    """Greedy descent to the base layer, then an ``ef_search`` beam; best ``k`` visited."""
    _check_search(index, ef_search, k)
    q = np.ascontiguousarray(as_dense(q, name="query"))
    if q.size != index.data.shape[1]:
        raise SearchIndexError(f"query dim {q.size} != index dim {index.data.shape[1]}")
    return _Searcher(index, ef_search).run(index, q, ef_search, k)


def graph_search_batch(index: GraphIndex, queries, ef_search: int = 200, k: int = 10) -> list[SearchResult]:
    _check_search(index, ef_search, k)
    qs = np.ascontiguousarray(as_matrix(queries, name="queries"))
    if qs.shape[1] != index.data.shape[1]:
        raise SearchIndexError(f"query dim {qs.shape[1]} != index dim {index.data.shape[1]}")
    s = _Searcher(index, ef_search)
    return [s.run(index, q, ef_search, k) for q in qs]
