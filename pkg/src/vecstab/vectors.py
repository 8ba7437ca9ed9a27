"""Vector representations, primitive metrics and the signed split map.

Dense vectors are plain 1-D ``float64`` numpy arrays; :func:`as_dense` is the
ingestion gate that enforces the invariants (non-empty, finite). Sparse vectors
store strictly increasing indices with strictly positive values.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import _kernels


class VectorError(ValueError):
    """Raised when a vector violates a representation invariant."""


def as_dense(x, *, name: str = "vector") -> np.ndarray:
    """Validate and convert ``x`` to a 1-D float64 array."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise VectorError(f"{name} must be 1-D, got shape {arr.shape}")
    if arr.shape[0] < 1:
        raise VectorError(f"{name} must have dimension >= 1")
    if not np.all(np.isfinite(arr)):
        raise VectorError(f"{name} contains non-finite values")
    return arr


def as_matrix(rows, *, name: str = "vectors") -> np.ndarray:
    """Validate a collection of equal-dimension vectors as an ``(n, m)`` array."""
    arr = np.asarray(rows, dtype=np.float64)
    if arr.ndim != 2:
        raise VectorError(f"{name} must be 2-D (n, m), got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise VectorError(f"{name} must be non-empty, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise VectorError(f"{name} contains non-finite values")
    return np.ascontiguousarray(arr)


@dataclass(frozen=True)
class Metric:
    """A primitive distance: ``lp`` with exponent ``p >= 1``, or ``cosine``."""

    kind: str = "lp"
    p: float = 2.0

    def __post_init__(self):
        if self.kind not in ("lp", "cosine"):
            raise VectorError(f"unknown metric kind {self.kind!r}")
        if self.kind == "lp" and not self.p >= 1:
            raise VectorError(f"lp metric requires p >= 1, got {self.p}")

    @classmethod
    def lp(cls, p: float = 2.0) -> "Metric":
        return cls("lp", float(p))

    @classmethod
    def cosine(cls) -> "Metric":
        return cls("cosine", 2.0)

    @classmethod
    def parse(cls, text: str) -> "Metric":
        """Parse ``"l1"``, ``"l2"``, ``"lp:<p>"`` or ``"cosine"``."""
        t = text.strip().lower()
        if t == "cosine":
            return cls.cosine()
        if t in ("l1", "l2"):
            return cls.lp(float(t[1]))
        if t.startswith("lp:"):
            try:
                return cls.lp(float(t[3:]))
            except ValueError:
                pass
        raise VectorError(f"cannot parse metric {text!r}")

    def __str__(self) -> str:
        if self.kind == "cosine":
            return "cosine"
        if self.p in (1.0, 2.0):
            return f"l{int(self.p)}"
        return f"lp:{self.p:g}"

    @property
    def code(self) -> int:
        if self.kind == "cosine":
            return _kernels.COSINE
        if self.p == 2.0:
            return _kernels.L2
        if self.p == 1.0:
            return _kernels.L1
        return _kernels.LP

    def __call__(self, x, y) -> float:
        if self.kind == "cosine":
            return cosine_distance(x, y)
        return lp_distance(x, y, self.p)


L2 = Metric.lp(2.0)
COSINE = Metric.cosine()


def _check_pair(x, y):
    x = as_dense(x, name="x")
    y = as_dense(y, name="y")
    if x.shape != y.shape:
        raise VectorError(f"dimension mismatch: {x.shape[0]} vs {y.shape[0]}")
    return x, y


def lp_distance(x, y, p: float = 2.0) -> float:
    """Return ``(sum_i |x_i - y_i|^p)^(1/p)``.

    Raises:
        VectorError: on dimension mismatch or non-finite input.
        ValueError: if ``p < 1``.
    """
    if not p >= 1:
        raise ValueError(f"p must be >= 1, got {p}")
    x, y = _check_pair(x, y)
    diff = np.abs(x - y)
    if p == 1:
        return float(diff.sum())
    if p == 2:
        return float(np.sqrt(np.dot(diff, diff)))
    return float(np.sum(diff**p) ** (1.0 / p))


def cosine_distance(x, y) -> float:
    """Return ``1 - <x, y> / (|x| |y|)``, clamped to ``[0, 2]``."""
    x, y = _check_pair(x, y)
    nx = np.linalg.norm(x)
    ny = np.linalg.norm(y)
    if nx == 0 or ny == 0:
        raise VectorError("cosine distance is undefined for zero-norm vectors")
    return float(min(2.0, max(0.0, 1.0 - np.dot(x, y) / (nx * ny))))


def lp_norm(x, p: float = 2.0) -> float:
    x = np.asarray(x, dtype=np.float64)
    if p == 2:
        return float(np.sqrt(np.dot(x, x)))
    return float(np.sum(np.abs(x) ** p) ** (1.0 / p))


def normalize(x, p: float = 2.0) -> np.ndarray:
    """Scale ``x`` to unit ``lp`` norm."""
    x = as_dense(x)
    n = lp_norm(x, p)
    if n == 0:
        raise VectorError("cannot normalize the zero vector")
    return x / n


def normalize_rows(a, p: float = 2.0) -> np.ndarray:
    a = as_matrix(a)
    if p == 2:
        norms = np.sqrt(np.einsum("ij,ij->i", a, a))
    else:
        norms = np.sum(np.abs(a) ** p, axis=1) ** (1.0 / p)
    if np.any(norms == 0):
        raise VectorError("cannot normalize a zero row")
    return a / norms[:, None]


def split_signed(x) -> np.ndarray:
    """Map ``x`` in R^m to the nonnegative ``(x+, x-)`` in R^2m.

    The map preserves every ``lp`` norm and distorts pairwise ``lp`` distances
    by at most ``2^(1/p)`` above and ``2^-(1-1/p)`` below.
    """
    x = as_dense(x)
    return np.concatenate([np.maximum(x, 0.0), np.maximum(-x, 0.0)])


@dataclass(frozen=True, eq=False)
class SparseVector:
    """A nonnegative sparse vector of dimension ``dim``."""

    dim: int
    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64).reshape(-1)
        val = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if int(self.dim) < 1:
            raise VectorError(f"dim must be >= 1, got {self.dim}")
        if idx.shape != val.shape:
            raise VectorError("indices and values must have the same length")
        if idx.size > self.dim:
            raise VectorError("more entries than dimensions")
        if idx.size and (idx[0] < 0 or idx[-1] >= self.dim):
            raise VectorError(f"indices must lie in [0, {self.dim})")
        if idx.size > 1 and np.any(np.diff(idx) <= 0):
            raise VectorError("indices must be strictly increasing")
        if not np.all(np.isfinite(val)) or np.any(val <= 0):
            raise VectorError("values must be finite and strictly positive")
        object.__setattr__(self, "dim", int(self.dim))
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[self.indices] = self.values
        return out

    @classmethod
    def from_dense(cls, x) -> "SparseVector":
        x = as_dense(x)
        if np.any(x < 0):
            raise VectorError("sparse vectors must be nonnegative")
        idx = np.flatnonzero(x)
        return cls(x.shape[0], idx, x[idx])

    def norm(self, p: float = 2.0) -> float:
        return lp_norm(self.values, p)

    def normalized(self, p: float = 2.0) -> "SparseVector":
        n = self.norm(p)
        if n == 0:
            raise VectorError("cannot normalize the zero vector")
        return SparseVector(self.dim, self.indices, self.values / n)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseVector):
            return NotImplemented
        return (
            self.dim == other.dim
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


def sparse_lp_distance(x: SparseVector, y: SparseVector, p: float = 2.0) -> float:
    """``lp`` distance between sparse vectors by a merge over sorted indices."""
    if not p >= 1:
        raise ValueError(f"p must be >= 1, got {p}")
    if x.dim != y.dim:
        raise VectorError(f"dimension mismatch: {x.dim} vs {y.dim}")
    xi, xv, yi, yv = x.indices, x.values, y.indices, y.values
    i = j = 0
    acc = 0.0
    while i < xi.size and j < yi.size:
        if xi[i] == yi[j]:
            acc += abs(xv[i] - yv[j]) ** p
            i += 1
            j += 1
        elif xi[i] < yi[j]:
            acc += xv[i] ** p
            i += 1
        else:
            acc += yv[j] ** p
            j += 1
    acc += float(np.sum(xv[i:] ** p)) + float(np.sum(yv[j:] ** p))
    return acc ** (1.0 / p)


def pairwise_distances(a, b, metric: Metric = L2) -> np.ndarray:
    """All distances between the rows of ``a`` and the rows of ``b``.

    Each cell is reduced independently, so the value for a pair does not depend
    on which other rows are in the batch.
    """
    a = as_matrix(a, name="a")
    b = as_matrix(b, name="b")
    if a.shape[1] != b.shape[1]:
        raise VectorError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    if metric.kind == "cosine":
        na, nb = _kernels.row_norms(a), _kernels.row_norms(b)
        if np.any(na == 0) or np.any(nb == 0):
            raise VectorError("cosine distance is undefined for zero-norm vectors")
    else:
        na = nb = np.empty(0)
    return _kernels.pairwise(metric.code, float(metric.p), a, b, na, nb)


def sparse_matrix(vectors: Sequence[SparseVector]):
    """Stack sparse vectors into a ``scipy.sparse.csr_matrix``."""
    from scipy import sparse

    if not vectors:
        raise VectorError("empty sparse collection")
    dim = vectors[0].dim
    if any(v.dim != dim for v in vectors):
        raise VectorError("sparse vectors have mixed dimensions")
    indptr = np.zeros(len(vectors) + 1, dtype=np.int64)
    indptr[1:] = np.cumsum([v.nnz for v in vectors])
    indices = np.concatenate([v.indices for v in vectors]) if indptr[-1] else np.empty(0, np.int64)
    data = np.concatenate([v.values for v in vectors]) if indptr[-1] else np.empty(0)
    return sparse.csr_matrix((data, indices, indptr), shape=(len(vectors), dim))


def sparse_pairwise_l2(queries: Sequence[SparseVector], docs: Sequence[SparseVector]) -> np.ndarray:
    """Euclidean distances between two sparse collections via one sparse product."""
    qa, da = sparse_matrix(queries), sparse_matrix(docs)
    if qa.shape[1] != da.shape[1]:
        raise VectorError("dimension mismatch between sparse collections")
    qn = np.asarray(qa.multiply(qa).sum(axis=1)).ravel()
    dn = np.asarray(da.multiply(da).sum(axis=1)).ravel()
    cross = (qa @ da.T).toarray()
    sq = qn[:, None] + dn[None, :] - 2.0 * cross
    return np.sqrt(np.maximum(sq, 0.0))


def dedupe_rows(rows: Iterable[np.ndarray]) -> np.ndarray:
    """Drop rows that are bitwise duplicates of an earlier row, keeping order."""
    seen = set()
    keep = []
    for r in rows:
        key = np.ascontiguousarray(r, dtype=np.float64).tobytes()
        if key not in seen:
            seen.add(key)
            keep.append(r)
    return np.array(keep, dtype=np.float64)
