"""Relative variance, DMAX/DMIN contrast and dimension-sweep stability evidence.

RelVar is ``Var[delta] / E[delta]^2`` over the pooled distances of every
(query, document) pair in a cell, with population (divide-by-N) variance.
Vanishing RelVar as the dimension grows is the signature of an unstable
problem; a non-vanishing value over a large database is the signature of a
stable one. Everything here is a finite-sample estimate, never a proof.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from .vectors import L2, Metric, as_matrix, pairwise_distances


class StabilityError(ValueError):
    pass


def _values(sample) -> np.ndarray:
    if isinstance(sample, np.ma.MaskedArray):
        sample = sample.compressed()
    v = np.asarray(sample, dtype=np.float64).ravel()
    if not np.all(np.isfinite(v)):
        raise StabilityError("distance sample contains non-finite values")
    if np.any(v < 0):
        raise StabilityError("distances must be nonnegative")
    return v


def relvar(sample) -> float:
    """Population variance of ``sample`` divided by its squared mean."""
    v = _values(sample)
    if v.size < 2:
        raise StabilityError("relvar needs at least two distances")
    mean = v.mean()
    if mean <= 0:
        raise StabilityError("relvar is undefined for a zero-mean sample")
    return float(np.mean((v - mean) ** 2) / (mean * mean))


def stability_ratio(distances) -> float:
    """DMAX / DMIN over one query's distances.

    Raises:
        StabilityError: if DMIN is zero, which means the database holds an exact
            copy of the query; callers must drop or perturb such points.
    """
    v = _values(distances)
    if v.size == 0:
        raise StabilityError("no distances")
    lo = v.min()
    if lo == 0:
        raise StabilityError("DMIN = 0: the query has an exact duplicate in the database")
    return float(v.max() / lo)


def per_query_ratios(matrix) -> np.ndarray:
    """Row-wise DMAX/DMIN. Masked (excluded) cells are ignored; empty rows are skipped."""
    out = []
    if isinstance(matrix, np.ma.MaskedArray):
        mask = np.ma.getmaskarray(matrix)
        data = np.asarray(matrix.data)
        for i in range(data.shape[0]):
            row = data[i][~mask[i]]
            if row.size:
                out.append(stability_ratio(row))
        return np.array(out)
    m = np.asarray(matrix, dtype=np.float64)
    lo = m.min(axis=1)
    if np.any(lo == 0):
        bad = int(np.flatnonzero(lo == 0)[0])
        raise StabilityError(f"DMIN = 0 for query {bad}: exact duplicate in the database")
    _values(m)
    return m.max(axis=1) / lo


def strong_stability_constant(queries, docs, metric: Metric = L2) -> float:
    """Smallest per-query DMAX/DMIN over the given queries: the empirical ``c``."""
    d = pairwise_distances(as_matrix(queries, name="queries"), as_matrix(docs, name="docs"), metric)
    return float(per_query_ratios(d).min())


@dataclass
class StabilityReport:
    dimension: int
    per_query_ratio: np.ndarray
    relvar: float
    n_queries: int
    n_docs: int
    config_label: str = ""

    def __post_init__(self):
        self.per_query_ratio = np.asarray(self.per_query_ratio, dtype=np.float64)
        if np.any(self.per_query_ratio < 1):
            raise StabilityError("ratios must be >= 1")
        if self.relvar < 0:
            raise StabilityError("relvar must be >= 0")

    @property
    def ratio_median(self) -> float:
        return float(np.median(self.per_query_ratio))

    @property
    def ratio_p10(self) -> float:
        return float(np.percentile(self.per_query_ratio, 10))


def report_from_matrix(matrix, dimension: int, label: str = "") -> StabilityReport:
    """Build a report from one cell's ``(n_queries, n_docs)`` distance matrix."""
    return StabilityReport(
        dimension=int(dimension),
        per_query_ratio=per_query_ratios(matrix),
        relvar=relvar(matrix),
        n_queries=int(matrix.shape[0]),
        n_docs=int(matrix.shape[1]),
        config_label=label,
    )


def stability_sweep(
    generator: Callable[[int, int], Any],
    dims: Sequence[int],
    distance_fn: Callable[[Any], np.ndarray],
    seed: int = 0,
    label: str = "",
) -> list[StabilityReport]:
    """Run one stability cell per dimension.

    Args:
        generator: ``generator(m, seed)`` returns a problem instance at dimension ``m``.
        dims: strictly increasing dimensions.
        distance_fn: maps the instance to its ``(n_queries, n_docs)`` distance
            matrix; a masked array marks hard-excluded pairs.
        seed: passed unchanged to every call of ``generator``.
    """
    dims = [int(m) for m in dims]
    if not dims or any(b <= a for a, b in zip(dims, dims[1:])):
        raise StabilityError(f"dims must be non-empty and strictly increasing, got {dims}")
    return [report_from_matrix(distance_fn(generator(m, seed)), m, label) for m in dims]


class Evidence(enum.Enum):
    STABLE = "StableEvidence"
    UNSTABLE = "UnstableEvidence"


@dataclass(frozen=True)
class Verdict:
    evidence: Evidence
    relvars: tuple
    dims: tuple
    note: str = field(default="finite-sample evidence, not a proof")

    @property
    def stable(self) -> bool:
        return self.evidence is Evidence.STABLE


def verdict(reports: Sequence[StabilityReport], relvar_floor: float = 0.01, slack: float = 0.10) -> Verdict:
    """Classify a sweep as unstable iff RelVar ends below ``relvar_floor`` and never
    rises by more than ``slack`` (relative) between consecutive dimensions."""
    if len(reports) < 2:
        raise StabilityError("a verdict needs at least two dimensions")
    rs = sorted(reports, key=lambda r: r.dimension)
    rv = [r.relvar for r in rs]
    decreasing = all(b <= a * (1.0 + slack) for a, b in zip(rv, rv[1:]))
    ev = Evidence.UNSTABLE if (rv[-1] < relvar_floor and decreasing) else Evidence.STABLE
    return Verdict(ev, tuple(rv), tuple(r.dimension for r in rs))
