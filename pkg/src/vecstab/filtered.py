"""Penalty-based filtered near-neighbor search.

A document whose attributes fail the query's filter pays an additive penalty
``alpha`` on top of the primitive distance. ``alpha = inf`` is hard filtering:
mismatched documents are excluded outright and never enter any statistic.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .vectors import L2, Metric, as_dense, as_matrix, pairwise_distances


class FilterError(ValueError):
    pass


class FilterKind(enum.Enum):
    SUBSET = "subset"  # A_q is a subset of A_d
    EXACT = "exact"  # A_q == A_d
    RANGE = "range"  # A_q holds "lo" and "hi" bounds, A_d one scalar


class _Excluded:
    """Sentinel for a hard-filtered (``alpha = inf``) mismatch."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "EXCLUDED"

    def __bool__(self) -> bool:
        return False


EXCLUDED = _Excluded()
HARD = math.inf


def attribute_set(tokens=()) -> frozenset:
    attrs = frozenset(tokens)
    for t in attrs:
        if not isinstance(t, str) or not t:
            raise FilterError(f"attribute tokens must be non-empty strings, got {t!r}")
    return attrs


@dataclass(frozen=True, eq=False)
class FilteredPoint:
    vector: np.ndarray
    attrs: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "vector", as_dense(self.vector))
        object.__setattr__(self, "attrs", attribute_set(self.attrs))


def _numbers(attrs: frozenset) -> list[float]:
    try:
        return sorted(float(a) for a in attrs)
    except ValueError as exc:
        raise FilterError(f"range filter needs numeric attributes, got {sorted(attrs)}") from exc


def filter_match(q_attrs, d_attrs, kind: FilterKind = FilterKind.SUBSET) -> int:
    """Return 1 if the document attributes pass the query filter, else 0.

    For ``RANGE`` the query carries two numerals (the interval ends, or one
    numeral for a degenerate interval) and the document exactly one.
    """
    q_attrs, d_attrs = frozenset(q_attrs), frozenset(d_attrs)
    if kind is FilterKind.SUBSET:
        return int(q_attrs <= d_attrs)
    if kind is FilterKind.EXACT:
        return int(q_attrs == d_attrs)
    bounds = _numbers(q_attrs)
    values = _numbers(d_attrs)
    if len(bounds) not in (1, 2) or len(values) != 1:
        raise FilterError("range filter needs a 1- or 2-element query interval and one document value")
    lo, hi = bounds[0], bounds[-1]
    return int(lo <= values[0] <= hi)


def _check_alpha(alpha: float) -> None:
    if not alpha >= 0:
        raise FilterError(f"alpha must be >= 0 or inf, got {alpha}")


def penalized_distance(
    q: FilteredPoint,
    d: FilteredPoint,
    metric: Metric = L2,
    kind: FilterKind = FilterKind.SUBSET,
    alpha: float = 0.0,
):
    """``delta(q, d) + alpha * (1 - f(A_q, A_d))``, or ``EXCLUDED`` for hard mismatches."""
    _check_alpha(alpha)
    base = metric(q.vector, d.vector)
    if filter_match(q.attrs, d.attrs, kind):
        return base
    if math.isinf(alpha):
        return EXCLUDED
    return base + alpha


def mismatch_matrix(queries: Sequence[FilteredPoint], docs: Sequence[FilteredPoint], kind: FilterKind) -> np.ndarray:
    """Boolean ``(n_q, n_d)`` matrix, True where the filter rejects the document."""
    q_keys: dict = {}
    d_keys: dict = {}
    q_inv = np.array([q_keys.setdefault(q.attrs, len(q_keys)) for q in queries])
    d_inv = np.array([d_keys.setdefault(d.attrs, len(d_keys)) for d in docs])
    table = np.empty((len(q_keys), len(d_keys)), dtype=bool)
    for qa, a in q_keys.items():
        for da, b in d_keys.items():
            table[a, b] = not filter_match(qa, da, kind)
    return table[np.ix_(q_inv, d_inv)]


def penalized_matrix(
    queries: Sequence[FilteredPoint],
    docs: Sequence[FilteredPoint],
    metric: Metric = L2,
    kind: FilterKind = FilterKind.SUBSET,
    alpha: float = 0.0,
    mismatch: np.ndarray | None = None,
) -> np.ma.MaskedArray:
    """Penalized distances for every pair; hard-filtered pairs come back masked."""
    _check_alpha(alpha)
    base = pairwise_distances(
        as_matrix([q.vector for q in queries]), as_matrix([d.vector for d in docs]), metric
    )
    if mismatch is None:
        mismatch = mismatch_matrix(queries, docs, kind)
    if math.isinf(alpha):
        return np.ma.masked_array(base, mask=mismatch)
    return np.ma.masked_array(base + alpha * mismatch, mask=np.zeros_like(mismatch))


def filtered_search(
    q: FilteredPoint,
    db: Sequence[FilteredPoint],
    metric: Metric = L2,
    kind: FilterKind = FilterKind.SUBSET,
    alpha: float = 0.0,
    k: int = 10,
) -> list[tuple[int, float]]:
    """Top-``k`` ``(index, penalized distance)`` pairs, ties by ascending index.

    Hard-filtered documents never appear; fewer than ``k`` survivors are all returned.
    """
    if k < 1:
        raise FilterError("k must be >= 1")
    if not db:
        raise FilterError("empty database")
    row = penalized_matrix([q], db, metric, kind, alpha)[0]
    ids = np.flatnonzero(~np.ma.getmaskarray(row))
    vals = np.asarray(row.data)[ids]
    order = np.lexsort((ids, vals))[:k]
    return [(int(ids[i]), float(vals[i])) for i in order]
