"""Seeded synthetic datasets for the stability experiments.

Randomness comes from Philox streams. Vector ``i`` of a generator draws from
``Philox(key=seed, counter=[0, 0, i, tag])`` where ``tag`` identifies the
generator role (documents, queries, centres, ...). Draws only ever advance the
two low counter words, so the streams never overlap and any slice of vectors can
be produced independently, in any order, with identical output. A vector's
first ``m`` draws do not depend on how many vectors are requested.
"""

from __future__ import annotations

import enum
import json
import math
from importlib import resources

import numpy as np

from .aggregation import MultiVectorProblem
from .filtered import FilteredPoint
from .vectors import COSINE, L2, SparseVector, pairwise_distances

MASK64 = (1 << 64) - 1

TAG_IID = 1
TAG_CLUSTER_CENTER = 2
TAG_CLUSTER_POINT = 3
TAG_EQUAL = 4
TAG_TOPIC = 5
TAG_DOC_SET = 6
TAG_QUERY_SET = 7
TAG_FILTER_QUERY = 8
TAG_FILTER_DOC = 9
TAG_SPARSE = 10


class GeneratorError(ValueError):
    pass


def stream(seed: int, tag: int, index: int) -> np.random.Generator:
    """The random stream owned by vector ``index`` of role ``tag``."""
    return np.random.Generator(np.random.Philox(key=int(seed) & MASK64, counter=[0, 0, int(index), int(tag)]))


def _check_nm(n: int, m: int) -> None:
    if n < 1 or m < 1:
        raise GeneratorError(f"n and m must be >= 1, got n={n}, m={m}")


def gen_iid_gaussian(n: int, m: int, seed: int = 0) -> np.ndarray:
    """``n`` vectors with iid standard normal coordinates."""
    _check_nm(n, m)
    out = np.empty((n, m))
    for i in range(n):
        out[i] = stream(seed, TAG_IID, i).standard_normal(m)
    return out


def cluster_centers(n_clusters: int, m: int, seed: int = 0) -> np.ndarray:
    """Gaussian directions scaled to norm ``sqrt(m)``."""
    c = np.empty((n_clusters, m))
    for j in range(n_clusters):
        v = stream(seed, TAG_CLUSTER_CENTER, j).standard_normal(m)
        c[j] = v * (math.sqrt(m) / np.linalg.norm(v))
    return c


def gen_clustered(
    n: int, m: int, n_clusters: int = 5, spread: float = 0.3, seed: int = 0, *, return_labels: bool = False
):
    """Points around ``n_clusters`` centres with per-coordinate noise ``spread``.

    Each point picks its cluster uniformly. Centres are shared by every call
    with the same seed, so queries and documents drawn as one collection live
    in the same clusters.
    """
    _check_nm(n, m)
    if n_clusters < 2:
        raise GeneratorError("n_clusters must be >= 2")
    if not spread > 0:
        raise GeneratorError("spread must be > 0")
    centers = cluster_centers(n_clusters, m, seed)
    out = np.empty((n, m))
    labels = np.empty(n, dtype=np.int64)
    for i in range(n):
        rng = stream(seed, TAG_CLUSTER_POINT, i)
        labels[i] = rng.integers(n_clusters)
        out[i] = centers[labels[i]] + spread * rng.standard_normal(m)
    return (out, labels) if return_labels else out


def gen_equal_component(n: int, m: int, seed: int = 0) -> np.ndarray:
    """Each vector repeats one standard normal value in all ``m`` coordinates."""
    _check_nm(n, m)
    vals = np.array([stream(seed, TAG_EQUAL, i).standard_normal() for i in range(n)])
    return np.repeat(vals[:, None], m, axis=1)


def split_queries(data: np.ndarray, n_queries: int) -> tuple[np.ndarray, np.ndarray]:
    """First ``n_queries`` rows are queries, the rest documents."""
    return data[:n_queries], data[n_queries:]


# --------------------------------------------------------------------------
# multi-vector


def _unit_gaussian(rng: np.random.Generator, m: int) -> np.ndarray:
    v = rng.standard_normal(m)
    return v / np.linalg.norm(v)


def gen_antipodal_multivec(
    n_docs: int = 1000,
    n_queries: int = 100,
    set_size: int = 4,
    m: int = 128,
    noise: float = 0.1,
    seed: int = 0,
    *,
    n_topics: int = 10,
    exact_negation: bool = False,
) -> MultiVectorProblem:
    """Document sets closed under negation, with cosine as the primitive metric.

    Every topic owns ``set_size`` unit Gaussian base vectors. A document set
    of topic ``t`` holds, for each base vector ``u``, a noisy copy of ``u`` and
    a noisy copy of ``-u`` (``2 * set_size`` vectors). A query set of topic
    ``t`` holds one noisy copy of each base vector. Noise is Gaussian with
    total norm about ``noise``.

    With ``exact_negation=True`` the document set instead holds ``v`` and
    exactly ``-v`` for each noisy copy ``v``; average pooling under cosine is
    then identically 1 for every pair.
    """
    _check_nm(n_docs, m)
    if set_size < 1 or n_queries < 1 or n_topics < 1:
        raise GeneratorError("set_size, n_queries and n_topics must be >= 1")
    if noise < 0:
        raise GeneratorError("noise must be >= 0")
    sigma = noise / math.sqrt(m)
    bases = np.empty((n_topics, set_size, m))
    for t in range(n_topics):
        rng = stream(seed, TAG_TOPIC, t)
        for j in range(set_size):
            bases[t, j] = _unit_gaussian(rng, m)

    docs = []
    for i in range(n_docs):
        rng = stream(seed, TAG_DOC_SET, i)
        u = bases[rng.integers(n_topics)]
        pos = u + sigma * rng.standard_normal((set_size, m))
        neg = -pos if exact_negation else -u + sigma * rng.standard_normal((set_size, m))
        docs.append(np.vstack([pos, neg]))

    queries = []
    for s in range(n_queries):
        rng = stream(seed, TAG_QUERY_SET, s)
        u = bases[rng.integers(n_topics)]
        queries.append(u + sigma * rng.standard_normal((set_size, m)))
    return MultiVectorProblem(queries, docs, COSINE)


# --------------------------------------------------------------------------
# filtered

MATCH = "match"
OTHER = "other"


def gen_filtered(n_docs: int, n_queries: int, m: int, p_mismatch: float = 0.5, seed: int = 0):
    """Unit-norm Gaussian queries and documents with distance-correlated filters.

    Documents are ranked by mean l2 distance to all queries (ties by index); the
    closest ``ceil(p_mismatch * n_docs)`` carry a mismatching attribute. All
    queries carry ``{"match"}`` and filter with subset semantics.
    """
    _check_nm(n_docs, m)
    if n_queries < 1:
        raise GeneratorError("n_queries must be >= 1")
    if not 0 < p_mismatch < 1:
        raise GeneratorError("p_mismatch must lie in (0, 1)")
    q = np.empty((n_queries, m))
    d = np.empty((n_docs, m))
    for i in range(n_queries):
        q[i] = _unit_gaussian(stream(seed, TAG_FILTER_QUERY, i), m)
    for i in range(n_docs):
        d[i] = _unit_gaussian(stream(seed, TAG_FILTER_DOC, i), m)
    mean_dist = pairwise_distances(q, d, L2).mean(axis=0)
    n_bad = math.ceil(p_mismatch * n_docs)
    bad = np.zeros(n_docs, dtype=bool)
    bad[np.argsort(mean_dist, kind="stable")[:n_bad]] = True
    match, other = frozenset([MATCH]), frozenset([OTHER])
    queries = [FilteredPoint(v, match) for v in q]
    docs = [FilteredPoint(v, other if b else match) for v, b in zip(d, bad)]
    return queries, docs


# --------------------------------------------------------------------------
# sparse


class SparseRegime(enum.Enum):
    COI_AND_OVERLAP = "coi_and_overlap"
    COI_ONLY = "coi_only"
    OVERLAP_ONLY = "overlap_only"
    NEITHER = "neither"

    @property
    def concentrated(self) -> bool:
        return self in (SparseRegime.COI_AND_OVERLAP, SparseRegime.COI_ONLY)

    @property
    def shared_heads(self) -> bool:
        return self in (SparseRegime.COI_AND_OVERLAP, SparseRegime.OVERLAP_ONLY)


def sparse_defaults() -> dict:
    text = resources.files("vecstab").joinpath("sparse_defaults.json").read_text()
    return {k: v for k, v in json.loads(text).items() if not k.startswith("_")}


def _zipf_order(rng: np.random.Generator, w: int, s: float) -> np.ndarray:
    """Random ranking of ``w`` window slots, favouring slots near the centre.

    Slot ``r`` (``r``-th closest to the centre) has weight ``(r + 1)^-s``; the
    ranking is a Plackett-Luce draw via Gumbel keys.
    """
    keys = -s * np.log(np.arange(1, w + 1)) + rng.gumbel(size=w)
    return np.argsort(-keys, kind="stable")


def gen_sparse_semantic(
    n: int,
    m: int,
    nnz: int = 128,
    zipf_s: float = 1.0,
    regime: SparseRegime = SparseRegime.COI_AND_OVERLAP,
    seed: int = 0,
    *,
    p: float = 2.0,
    **overrides,
) -> list[SparseVector]:
    """Nonnegative, unit-``lp`` sparse vectors with a Zipf-shaped semantic head.

    Each vector has a head of ``head_size`` coordinates in a contiguous window
    around a semantic centre and ``nnz - head_size`` tail coordinates spread
    uniformly over the rest of the space. In shared-head regimes every vector
    picks one of ``round(1 / overlap_rate)`` collection-wide centres with
    disjoint windows, so a random pair shares its head with probability about
    ``overlap_rate``. Otherwise each vector gets its own uniformly placed centre.
    Concentrated regimes give the head ``head_mass_concentrated`` of the
    ``lp^p`` mass; diluted ones give it ``head_mass_diluted``.

    Defaults come from ``sparse_defaults.json``; keyword ``overrides`` replace them.
    """
    _check_nm(n, m)
    cfg = sparse_defaults()
    unknown = set(overrides) - set(cfg)
    if unknown:
        raise GeneratorError(f"unknown sparse generator options {sorted(unknown)}")
    cfg.update(overrides)
    regime = SparseRegime(regime)
    w = int(cfg["head_size"])
    if not w <= nnz <= m:
        raise GeneratorError(f"need head_size <= nnz <= m, got {w}, {nnz}, {m}")
    if not zipf_s > 0:
        raise GeneratorError("zipf_s must be > 0")
    head_mass = cfg["head_mass_concentrated"] if regime.concentrated else cfg["head_mass_diluted"]
    n_centers = max(1, round(1.0 / cfg["overlap_rate"]))
    if n_centers * w > m:
        raise GeneratorError("dimension too small for disjoint shared windows")
    rank_mass = np.arange(1, w + 1, dtype=np.float64) ** -zipf_s
    n_tail = nnz - w

    out = []
    for i in range(n):
        rng = stream(seed, TAG_SPARSE, i)
        if regime.shared_heads:
            start = (2 * int(rng.integers(n_centers)) + 1) * m // (2 * n_centers) - w // 2
        else:
            start = int(rng.integers(0, m - w + 1))
        # window slots ordered by distance from the centre
        centre = start + (w - 1) / 2.0
        window = np.arange(start, start + w)
        by_closeness = window[np.argsort(np.abs(window - centre), kind="stable")]
        head_idx = by_closeness[_zipf_order(rng, w, zipf_s)]
        head = rank_mass * np.exp(cfg["head_jitter"] * rng.standard_normal(w))
        head *= head_mass / head.sum()

        pool = np.concatenate([np.arange(0, start), np.arange(start + w, m)])
        tail_idx = rng.choice(pool, size=n_tail, replace=False) if n_tail else np.empty(0, np.int64)
        tail = rng.uniform(cfg["tail_weight_low"], cfg["tail_weight_high"], n_tail)
        if n_tail:
            tail *= (1.0 - head_mass) / tail.sum()

        idx = np.concatenate([head_idx, tail_idx]).astype(np.int64)
        mass = np.concatenate([head, tail])
        order = np.argsort(idx)
        vals = mass[order] ** (1.0 / p)
        out.append(SparseVector(m, idx[order], vals / np.sum(vals**p) ** (1.0 / p)))
    return out
