"""Checks of the stability-theorem assumptions and their closed-form constants.

Three families:

* multi-vector (Chamfer): strong-stability constant of the induced instance,
  the non-degeneracy pass rate, and the covariance of per-token nearest
  distances;
* filtered: the penalty threshold ``2 * Delta / (1 - p_max)``;
* sparse: concentration of importance, overlap of importance, the top-set
  spread constant ``tau`` and the ``X``/``Y`` gap with its RelVar lower bound.

Top-``kappa`` sets everywhere are taken by value descending with ties broken by
ascending coordinate index.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .aggregation import MultiVectorProblem, VectorSet, induced_instance
from .stability import per_query_ratios
from .vectors import L2, Metric, SparseVector, VectorError, as_matrix, lp_norm, pairwise_distances

UNIT_NORM_TOL = 1e-6
COV_INCONCLUSIVE_TOL = 1e-6


class ValidationError(ValueError):
    pass


class SmallSampleWarning(UserWarning):
    pass


# --------------------------------------------------------------------------
# multi-vector


@dataclass
class MultiVectorValidation:
    c: float
    nondegeneracy_pass_rate: float
    covariance_sum: float
    covariance_pass_rate: float = 1.0
    covariance_inconclusive: bool = False
    all_pass: bool = field(init=False)

    def __post_init__(self):
        self.all_pass = bool(
            self.c > 1 and self.nondegeneracy_pass_rate == 1.0 and self.covariance_sum >= 0
        )


def _set_extrema(query_vectors: np.ndarray, doc_sets: Sequence, metric: Metric):
    """Per (query vector, document set): min and max primitive distance."""
    sets = [s if isinstance(s, VectorSet) else VectorSet(s) for s in doc_sets]
    if not sets:
        raise ValidationError("no document sets")
    sizes = np.array([len(s) for s in sets])
    offsets = np.concatenate([[0], np.cumsum(sizes)])[:-1]
    prim = pairwise_distances(query_vectors, np.vstack([s.vectors for s in sets]), metric)
    return np.minimum.reduceat(prim, offsets, axis=1), np.maximum.reduceat(prim, offsets, axis=1)


def nondegeneracy_mask(queries, doc_sets: Sequence, metric: Metric = L2, c: float = 2.0) -> np.ndarray:
    """Per query: does ``c * max_k min_{d in D_k} delta >= max_k max_{d in D_k} delta`` hold?"""
    if not c > 1:
        raise ValidationError(f"c must be > 1, got {c}")
    q = as_matrix(queries, name="queries")
    mins, maxs = _set_extrema(q, doc_sets, metric)
    return c * mins.max(axis=1) >= maxs.max(axis=1)


def nondegeneracy_rate(queries, doc_sets: Sequence, metric: Metric = L2, c: float = 2.0) -> float:
    """Fraction of queries satisfying the non-degeneracy inequality."""
    return float(nondegeneracy_mask(queries, doc_sets, metric, c).mean())


def _cov_pair_sum(a: np.ndarray) -> float:
    """Sum over ``i < j`` of the population covariance between columns of ``a``."""
    k = a.shape[1]
    if k < 2:
        return 0.0
    centered = a - a.mean(axis=0)
    cov = centered.T @ centered / a.shape[0]
    return float(np.triu(cov, 1).sum())


def nearest_token_distances(query_sets: Sequence, docs, metric: Metric = L2) -> np.ndarray:
    """``A[s, i] = min_{d in docs} delta(q_{s,i}, d)`` for every query set ``s``."""
    sets = [s if isinstance(s, VectorSet) else VectorSet(s) for s in query_sets]
    k = len(sets[0])
    if any(len(s) != k for s in sets):
        raise ValidationError("query sets must share one size")
    d = docs.vectors if isinstance(docs, VectorSet) else as_matrix(docs, name="docs")
    prim = pairwise_distances(np.vstack([s.vectors for s in sets]), d, metric)
    return prim.min(axis=1).reshape(len(sets), k)


def covariance_sum(query_sets: Sequence, docs, metric: Metric = L2) -> float:
    """``sum_{i<j} Cov(A_i, A_j)`` across query sets for one document set ``docs``.

    ``A_i`` is the nearest-neighbour distance of the ``i``-th query vector,
    paired positionally across sets; population normalisation.
    """
    if len(query_sets) < 2:
        raise ValidationError("covariance needs at least two query sets")
    return _cov_pair_sum(nearest_token_distances(query_sets, docs, metric))


def pooled_nearest_token_distances(problem: MultiVectorProblem) -> np.ndarray:
    """Rows of ``A`` for every (query set, document set) pair: shape ``(nq * nd, k)``."""
    qv = np.vstack([s.vectors for s in problem.queries])
    mins, _ = _set_extrema(qv, problem.documents, problem.metric)
    nq, k, nd = len(problem.queries), problem.k, len(problem.documents)
    return mins.reshape(nq, k, nd).transpose(0, 2, 1).reshape(nq * nd, k)


def validate_multivector(problem: MultiVectorProblem) -> MultiVectorValidation:
    """Measure the three Chamfer-stability conditions on ``problem``.

    ``c`` is the strong-stability constant of the induced single-vector instance
    and is reused as the non-degeneracy constant. The reported covariance sum
    pools every (query set, document set) pair; the pass rate counts document
    sets whose own across-query covariance sum is nonnegative.

    Raises:
        StabilityError: if a query vector coincides exactly with a document vector.
    """
    qv, dv = induced_instance(problem)
    c = float(per_query_ratios(pairwise_distances(qv, dv, problem.metric)).min())
    rate = nondegeneracy_rate(qv, problem.documents, problem.metric, c) if c > 1 else 0.0

    pooled = pooled_nearest_token_distances(problem)
    cov = _cov_pair_sum(pooled)
    nq, nd = len(problem.queries), len(problem.documents)
    if nq >= 2:
        per_doc = pooled.reshape(nq, nd, problem.k)
        cov_rate = float(np.mean([_cov_pair_sum(per_doc[:, j, :]) >= 0 for j in range(nd)]))
    else:
        cov_rate = 1.0
    return MultiVectorValidation(
        c=c,
        nondegeneracy_pass_rate=rate,
        covariance_sum=cov,
        covariance_pass_rate=cov_rate,
        covariance_inconclusive=abs(cov) <= COV_INCONCLUSIVE_TOL,
    )


# --------------------------------------------------------------------------
# filtered


def filtered_threshold(delta_max: float, p_max: float) -> float:
    """Smallest penalty the filtered-stability theorem excludes: ``2 Delta / (1 - p_max)``.

    A penalty satisfies the theorem iff it is strictly greater than this value.
    """
    if not 0 < p_max < 1:
        raise ValidationError(f"p_max must lie in (0, 1), got {p_max}")
    if not delta_max > 0:
        raise ValidationError(f"delta_max must be > 0, got {delta_max}")
    return 2.0 * delta_max / (1.0 - p_max)


@dataclass
class FilteredValidation:
    p_mismatch: float
    delta_max: float
    threshold: float
    alpha: float
    satisfied: bool


def validate_filtered(mismatch: np.ndarray, delta_max: float, alpha: float, p_max: float | None = None):
    """Compare ``alpha`` with the threshold using the measured mismatch frequency.

    ``p_max`` defaults to the measured frequency; a caller-supplied bound is used
    as given but must not be below the measurement.
    """
    p = float(np.mean(mismatch))
    if p_max is None:
        p_max = p
    elif p_max < p:
        raise ValidationError(f"measured mismatch frequency {p:.4f} exceeds p_max {p_max}")
    thr = filtered_threshold(delta_max, p_max)
    return FilteredValidation(p, float(delta_max), thr, float(alpha), bool(alpha > thr))


# --------------------------------------------------------------------------
# sparse


def _entries(v):
    if isinstance(v, SparseVector):
        return v.indices, np.abs(v.values)
    x = np.asarray(v, dtype=np.float64)
    idx = np.flatnonzero(x)
    return idx, np.abs(x[idx])


def top_kappa(v, kappa: int) -> tuple[np.ndarray, np.ndarray]:
    """Indices and magnitudes of the ``kappa`` largest coordinates (ties: lower index first)."""
    if kappa < 1:
        raise ValidationError(f"kappa must be >= 1, got {kappa}")
    idx, val = _entries(v)
    order = np.lexsort((idx, -val))[:kappa]
    return idx[order], val[order]


def coi(v, kappa: int, p: float = 2.0) -> float:
    """Share of ``||v||_p^p`` carried by the top-``kappa`` coordinates."""
    if kappa < 1:
        raise ValidationError(f"kappa must be >= 1, got {kappa}")
    idx, val = _entries(v)
    # one running sum in top-kappa order: monotone in kappa, exactly 1 at full support
    mass = np.cumsum(val[np.lexsort((idx, -val))] ** p)
    if mass.size == 0 or mass[-1] == 0:
        raise VectorError("concentration of importance is undefined for the zero vector")
    return float(mass[min(kappa, mass.size) - 1] / mass[-1])


@dataclass(frozen=True)
class RSelection:
    R: int
    rho: float
    passed: bool


def select_R(docs: Sequence, kappa: int, alpha: float, rho_target: float = 0.9, R_max: int = 8, p: float = 2.0):
    """Smallest ``R`` in ``1..R_max`` with ``Pr[C_d(R kappa) >= alpha] >= rho_target``.

    If none qualifies, returns ``R_max`` with its rate and ``passed=False``.
    """
    if not docs:
        raise ValidationError("empty document sample")
    if kappa < 1 or R_max < 1:
        raise ValidationError("kappa and R_max must be >= 1")
    rho = 0.0
    for R in range(1, R_max + 1):
        rho = float(np.mean([coi(d, R * kappa, p) >= alpha for d in docs]))
        if rho >= rho_target:
            return RSelection(R, rho, True)
    return RSelection(R_max, rho, False)


def _check_unit(v, p: float) -> None:
    _, val = _entries(v)
    n = lp_norm(val, p)
    if abs(n - 1.0) > UNIT_NORM_TOL:
        raise ValidationError(f"overlap requires unit l{p:g} norm, got {n:.8f}")


def overlap_stat(q, d, kappa: int, p: float = 2.0) -> float:
    """``sum_{i in T_q & T_d} min(q_i^p, d_i^p)`` for unit-norm ``q`` and ``d``."""
    _check_unit(q, p)
    _check_unit(d, p)
    return _overlap(top_kappa(q, kappa), top_kappa(d, kappa), p)


def _overlap(tq, td, p: float) -> float:
    qi, qv = tq
    di, dv = td
    _, a, b = np.intersect1d(qi, di, assume_unique=True, return_indices=True)
    if a.size == 0:
        return 0.0
    return float(np.sum(np.minimum(qv[a] ** p, dv[b] ** p)))


@dataclass(frozen=True)
class OverlapParams:
    gamma: float | None
    pi_hat: float
    pi_max: float
    degenerate: bool
    n_pairs: int


def overlap_params_from_stats(stats) -> OverlapParams:
    """``gamma`` is the smallest positive overlap; ``pi_max = Pr[S > 0] = pi_hat``."""
    s = np.asarray(stats, dtype=np.float64).ravel()
    if s.size == 0:
        raise ValidationError("empty pair sample")
    pos = s[s > 0]
    pi_max = float(pos.size / s.size)
    if pos.size == 0:
        return OverlapParams(None, 0.0, 0.0, True, int(s.size))
    gamma = float(pos.min())
    pi_hat = float(np.mean(s >= gamma))
    return OverlapParams(gamma, pi_hat, pi_max, False, int(s.size))


def overlap_params(pairs: Sequence, kappa: int, p: float = 2.0) -> OverlapParams:
    """Estimate ``(gamma, pi_hat, pi_max)`` from (query, document) pairs."""
    if not pairs:
        raise ValidationError("empty pair sample")
    return overlap_params_from_stats([overlap_stat(q, d, kappa, p) for q, d in pairs])


def estimate_tau(vectors: Sequence, kappa: int, m: int, small_sample: int = 30) -> float:
    """``m`` times the largest per-coordinate frequency of membership in a top-``kappa`` set."""
    if not vectors:
        raise ValidationError("empty sample")
    if len(vectors) < small_sample:
        warnings.warn(
            f"tau estimated from only {len(vectors)} vectors", SmallSampleWarning, stacklevel=2
        )
    counts = np.bincount(
        np.concatenate([top_kappa(v, kappa)[0] for v in vectors]).astype(np.int64), minlength=m
    )
    return float(m * counts.max() / len(vectors))


@dataclass
class SparseTheoremConstants:
    """One row of sparse theorem constants; unset fields are ``None``."""

    p: float
    alpha: float
    rho: float
    gamma: float | None
    pi_hat: float
    X: float | None = None
    Y: float | None = None
    gap: float | None = None
    relvar_bound: float | None = None
    kappa: int | None = None
    R: int | None = None
    tau: float | None = None
    pi_max: float | None = None
    query_coi_rate: float | None = None
    rho_passed: bool = True
    overlap_degenerate: bool = False

    @property
    def gap_positive(self) -> bool:
        return self.gap is not None and self.gap > 0

    @property
    def failures(self) -> list[str]:
        out = []
        if self.query_coi_rate is not None and self.query_coi_rate < 1.0:
            out.append("query_coi_missed")
        if not self.rho_passed:
            out.append("rho_missed")
        if self.overlap_degenerate:
            out.append("overlap_degenerate")
        elif not self.gap_positive:
            out.append("gap_nonpositive")
        return out

    @property
    def applicable(self) -> bool:
        return not self.failures

    @property
    def advice(self) -> str:
        if self.applicable:
            return ""
        return "theorem inapplicable with these parameters; consider raising alpha or the rho target"


def _xy(alpha: float, gamma: float, rho: float, pi: float, p: float) -> tuple[float, float]:
    inv = 1.0 / p
    X = (2.0 - 2.0 * gamma) ** inv
    Y = rho * 2.0**inv / (1.0 - pi) * (alpha**inv - (1.0 - alpha) ** inv)
    return X, Y


def gap_terms(alpha: float, gamma: float, rho: float, pi: float, p: float = 2.0) -> tuple[float, float]:
    """Return ``(X, Y)`` with ``X = (2 - 2 gamma)^(1/p)`` and
    ``Y = rho 2^(1/p) (alpha^(1/p) - (1 - alpha)^(1/p)) / (1 - pi)``."""
    if not p >= 1:
        raise ValidationError(f"p must be >= 1, got {p}")
    if pi == 1:
        raise ValidationError("pi = 1 makes Y undefined")
    for name, v in (("alpha", alpha), ("rho", rho), ("pi", pi)):
        if not 0 < v < 1:
            raise ValidationError(f"{name} must lie in (0, 1), got {v}")
    if not 0 <= gamma <= 1:
        raise ValidationError(f"gamma must lie in [0, 1], got {gamma}")
    return _xy(alpha, gamma, rho, pi, p)


def sparse_gap(alpha: float, gamma: float, rho: float, pi: float, p: float = 2.0) -> SparseTheoremConstants:
    """Closed-form ``X``, ``Y``, ``Y - X`` and the bound ``(pi / 4)(Y - X)^2``.

    The gap may be negative; the bound is then reported as 0 and the
    theorem does not apply.
    """
    X, Y = gap_terms(alpha, gamma, rho, pi, p)
    gap = Y - X
    bound = pi / 4.0 * gap * gap if gap > 0 else 0.0
    return SparseTheoremConstants(
        p=float(p), alpha=float(alpha), rho=float(rho), gamma=float(gamma), pi_hat=float(pi),
        X=X, Y=Y, gap=gap, relvar_bound=bound,
    )


def sample_pairs(n_q: int, n_d: int, n_pairs: int, seed: int = 0) -> np.ndarray:
    """All pairs when there are at most ``n_pairs``, else a uniform seeded sample."""
    if n_q * n_d <= n_pairs:
        qq, dd = np.meshgrid(np.arange(n_q), np.arange(n_d), indexing="ij")
        return np.stack([qq.ravel(), dd.ravel()], axis=1)
    rng = np.random.Generator(np.random.Philox(key=seed))
    return np.stack([rng.integers(0, n_q, n_pairs), rng.integers(0, n_d, n_pairs)], axis=1)


def validate_sparse(
    queries: Sequence[SparseVector],
    docs: Sequence[SparseVector],
    kappa: int,
    alpha: float,
    rho_target: float = 0.9,
    p: float = 2.0,
    *,
    R_max: int = 8,
    n_pairs: int = 10_000,
    seed: int = 0,
) -> SparseTheoremConstants:
    """Estimate every sparse-theorem constant and evaluate the gap.

    Failed assumptions are reported through :attr:`SparseTheoremConstants.failures`,
    never auto-corrected.
    """
    if not queries or not docs:
        raise ValidationError("validation needs non-empty query and document samples")
    for v in list(queries) + list(docs):
        _check_unit(v, p)
    m = queries[0].dim if isinstance(queries[0], SparseVector) else len(queries[0])

    sel = select_R(docs, kappa, alpha, rho_target, R_max, p)
    q_rate = float(np.mean([coi(q, kappa, p) >= alpha for q in queries]))

    tq = [top_kappa(q, kappa) for q in queries]
    td = [top_kappa(d, kappa) for d in docs]
    pairs = sample_pairs(len(queries), len(docs), n_pairs, seed)
    ov = overlap_params_from_stats([_overlap(tq[i], td[j], p) for i, j in pairs])

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SmallSampleWarning)
        tau = max(estimate_tau(queries, kappa, m), estimate_tau(docs, kappa, m))

    out = SparseTheoremConstants(
        p=float(p), alpha=float(alpha), rho=sel.rho, gamma=ov.gamma, pi_hat=ov.pi_hat,
        kappa=int(kappa), R=sel.R, tau=tau, pi_max=ov.pi_max, query_coi_rate=q_rate,
        rho_passed=sel.passed, overlap_degenerate=ov.degenerate,
    )
    if not ov.degenerate:
        if ov.pi_hat >= 1:
            raise ValidationError("every sampled pair overlaps (pi_hat = 1); Y is undefined")
        # empirical rho may sit on either end of [0, 1]; the formula is fine there
        out.X, out.Y = _xy(alpha, ov.gamma, sel.rho, ov.pi_hat, p)
        out.gap = out.Y - out.X
        out.relvar_bound = ov.pi_hat / 4.0 * out.gap**2 if out.gap > 0 else 0.0
    return out
