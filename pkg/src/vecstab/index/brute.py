"""Exact search: the ground-truth oracle for the approximate indexes."""

from __future__ import annotations

import numpy as np

from .. import _kernels as K
from ..vectors import L2, Metric, as_dense, as_matrix
from .results import SearchIndexError, SearchResult, top_k


def _check_k(k: int) -> None:
    if k < 1:
        raise SearchIndexError("k must be >= 1")


def prepare(docs, metric: Metric) -> tuple[np.ndarray, np.ndarray]:
    """Contiguous float64 rows plus their l2 norms (used by cosine)."""
    data = np.ascontiguousarray(as_matrix(docs, name="docs"))
    norms = K.row_norms(data)
    if metric.kind == "cosine" and np.any(norms == 0):
        raise SearchIndexError("cosine index contains a zero vector")
    return data, norms


def brute_force_topk(q, docs, metric: Metric = L2, k: int = 10) -> SearchResult:
    """Exact top-``k`` by full scan; returns all documents when ``k`` exceeds their count."""
    _check_k(k)
    data, norms = prepare(docs, metric)
    q = np.ascontiguousarray(as_dense(q, name="query"))
    if q.size != data.shape[1]:
        raise SearchIndexError(f"query dim {q.size} != doc dim {data.shape[1]}")
    ids = np.arange(data.shape[0], dtype=np.int64)
    d = K.to_rows(metric.code, metric.p, q, data, float(K.vec_norm(q)), norms, ids)
    return top_k(ids, d, k)


def brute_force_batch(queries, docs, metric: Metric = L2, k: int = 10, block: int = 64) -> list[SearchResult]:
    """Exact top-``k`` for every query row, computed block-wise."""
    _check_k(k)
    data, norms = prepare(docs, metric)
    qs = np.ascontiguousarray(as_matrix(queries, name="queries"))
    if qs.shape[1] != data.shape[1]:
        raise SearchIndexError(f"query dim {qs.shape[1]} != doc dim {data.shape[1]}")
    qn = K.row_norms(qs)
    ids = np.arange(data.shape[0], dtype=np.int64)
    out = []
    for s in range(0, qs.shape[0], block):
        d = K.pairwise(metric.code, metric.p, qs[s : s + block], data, qn[s : s + block], norms)
        out.extend(top_k(ids, row, k) for row in d)
    return out
