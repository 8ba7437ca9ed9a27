"""Set-to-set distances for multi-vector search and the induced single-vector instance."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .vectors import L2, Metric, VectorError, as_matrix, dedupe_rows, pairwise_distances

CHAMFER = "chamfer"
AVG_POOL = "avg_pool"


@dataclass(frozen=True, eq=False)
class VectorSet:
    """A non-empty set of equal-dimension vectors stored as an ``(n, m)`` array."""

    vectors: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "vectors", as_matrix(self.vectors, name="vector set"))

    def __len__(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def _as_set(x) -> VectorSet:
    return x if isinstance(x, VectorSet) else VectorSet(x)


@dataclass
class MultiVectorProblem:
    """Query sets, document sets and the primitive metric between their members.

    All query sets must share one cardinality ``k``.
    """

    queries: list
    documents: list
    metric: Metric = field(default=L2)

    def __post_init__(self):
        self.queries = [_as_set(q) for q in self.queries]
        self.documents = [_as_set(d) for d in self.documents]
        if not self.queries or not self.documents:
            raise VectorError("a multi-vector problem needs at least one query and one document")
        dims = {s.dim for s in self.queries} | {s.dim for s in self.documents}
        if len(dims) != 1:
            raise VectorError(f"all sets must share one dimension, got {sorted(dims)}")
        sizes = {len(q) for q in self.queries}
        if len(sizes) != 1:
            raise VectorError(f"query sets must share one cardinality, got {sorted(sizes)}")

    @property
    def dim(self) -> int:
        return self.queries[0].dim

    @property
    def k(self) -> int:
        return len(self.queries[0])


def _cross(a, b, metric: Metric) -> np.ndarray:
    a, b = _as_set(a), _as_set(b)
    if a.dim != b.dim:
        raise VectorError(f"dimension mismatch: {a.dim} vs {b.dim}")
    return pairwise_distances(a.vectors, b.vectors, metric)


def chamfer(a, b, metric: Metric = L2) -> float:
    """Sum over ``a`` of the distance to the nearest member of ``b``. Not symmetric."""
    total = 0.0
    for v in _cross(a, b, metric).min(axis=1):
        total += v
    return float(total)


def avg_pool(a, b, metric: Metric = L2) -> float:
    """Mean of all pairwise distances between the members of ``a`` and ``b``."""
    d = _cross(a, b, metric)
    # sum in a fixed order so that avg_pool(a, b) == avg_pool(b, a) bitwise
    return float(np.sort(d, axis=None).sum() / d.size)


def induced_instance(problem: MultiVectorProblem) -> tuple[np.ndarray, np.ndarray]:
    """Unions of all query vectors and all document vectors, bitwise-deduplicated."""
    q = dedupe_rows(row for s in problem.queries for row in s.vectors)
    d = dedupe_rows(row for s in problem.documents for row in s.vectors)
    return q, d


def _stack(sets: Sequence[VectorSet]):
    sizes = np.array([len(s) for s in sets])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    return np.vstack([s.vectors for s in sets]), offsets


def agg_distance_matrix(problem: MultiVectorProblem, agg: str = CHAMFER) -> np.ndarray:
    """``out[i, j] = Agg(Q_i, D_j)`` for ``agg`` in ``{"chamfer", "avg_pool"}``.

    Primitive distances are computed once for the stacked vectors and then
    reduced per block.
    """
    if agg not in (CHAMFER, AVG_POOL):
        raise ValueError(f"unknown aggregation {agg!r}")
    qv, qoff = _stack(problem.queries)
    dv, doff = _stack(problem.documents)
    prim = pairwise_distances(qv, dv, problem.metric)
    nq, nd = len(problem.queries), len(problem.documents)
    out = np.empty((nq, nd))
    if agg == CHAMFER:
        # min over each document block, then a left-to-right sum over each
        # query block, the same order chamfer() uses
        mins = np.minimum.reduceat(prim, doff[:-1], axis=1)
        for i in range(nq):
            acc = np.zeros(nd)
            for r in range(qoff[i], qoff[i + 1]):
                acc += mins[r]
            out[i] = acc
    elif len({len(d) for d in problem.documents}) == 1:
        k, s = problem.k, len(problem.documents[0])
        cells = prim.reshape(nq, k, nd, s).transpose(0, 2, 1, 3).reshape(nq, nd, k * s)
        out[:] = np.sort(cells, axis=-1).sum(axis=-1) / (k * s)
    else:
        for i in range(nq):
            block = prim[qoff[i] : qoff[i + 1]]
            for j in range(nd):
                cell = block[:, doff[j] : doff[j + 1]]
                out[i, j] = np.sort(cell, axis=None).sum() / cell.size
    return out
