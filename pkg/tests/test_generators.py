import math

import numpy as np
import pytest

from vecstab.aggregation import avg_pool
from vecstab.filtered import FilterKind, mismatch_matrix
from vecstab.generators import (
    GeneratorError,
    SparseRegime,
    gen_antipodal_multivec,
    gen_clustered,
    gen_equal_component,
    gen_filtered,
    gen_iid_gaussian,
    gen_sparse_semantic,
    sparse_defaults,
    split_queries,
    stream,
)
from vecstab.stability import Evidence, relvar, stability_sweep, verdict
from vecstab.validators import coi, overlap_params_from_stats, overlap_stat
from vecstab.vectors import COSINE, L2, Metric, lp_norm, pairwise_distances


def test_streams_are_independent_of_request_size():
    a = gen_iid_gaussian(10, 8, seed=5)
    b = gen_iid_gaussian(3, 8, seed=5)
    np.testing.assert_array_equal(a[:3], b)
    assert not np.array_equal(stream(5, 1, 0).random(4), stream(5, 2, 0).random(4))
    assert not np.array_equal(stream(5, 1, 0).random(4), stream(6, 1, 0).random(4))


def test_large_seed_accepted():
    a = gen_iid_gaussian(2, 3, seed=2**64 - 1)
    assert np.isfinite(a).all()


@pytest.mark.parametrize(
    "make",
    [
        lambda s: gen_iid_gaussian(20, 7, seed=s),
        lambda s: gen_clustered(20, 7, seed=s),
        lambda s: gen_equal_component(20, 7, seed=s),
        lambda s: np.vstack([x.vectors for x in gen_antipodal_multivec(6, 4, 2, 7, seed=s).documents]),
        lambda s: np.array([p.vector for p in gen_filtered(20, 3, 7, seed=s)[1]]),
        lambda s: np.concatenate([v.values for v in gen_sparse_semantic(20, 256, 16, seed=s)]),
    ],
    ids=["iid", "clustered", "equal", "antipodal", "filtered", "sparse"],
)
def test_determinism_and_finiteness(make):
    a, b, c = make(3), make(3), make(4)
    np.testing.assert_array_equal(a, b)
    assert np.isfinite(a).all()
    assert not np.array_equal(a, c)


class TestIid:
    def test_shape_and_moments(self):
        x = gen_iid_gaussian(1000, 64, seed=0)
        assert x.shape == (1000, 64)
        assert np.all(np.abs(x.mean(axis=0)) < 0.15)

    def test_relvar_drops(self):
        out = []
        for m in (64, 4096):
            q, d = split_queries(gen_iid_gaussian(300, m, seed=1), 20)
            out.append(relvar(pairwise_distances(q, d)))
        assert out[1] < out[0]

    @pytest.mark.parametrize("n, m", [(0, 3), (3, 0)])
    def test_bad_shape(self, n, m):
        with pytest.raises(GeneratorError):
            gen_iid_gaussian(n, m)


class TestClustered:
    def test_zero_spread_collapses(self):
        x, labels = gen_clustered(50, 6, spread=1e-300, seed=2, return_labels=True)
        centres = np.array([x[labels == k][0] for k in np.unique(labels)])
        for k, c in zip(np.unique(labels), centres):
            np.testing.assert_allclose(x[labels == k], np.broadcast_to(c, (np.sum(labels == k), 6)), atol=1e-290)
        np.testing.assert_allclose(np.linalg.norm(centres, axis=1), math.sqrt(6))

    def test_within_closer_than_across(self):
        x, labels = gen_clustered(3000, 32, seed=4, return_labels=True)
        rng = np.random.default_rng(0)
        within, across = [], []
        while len(within) < 1000 or len(across) < 1000:
            i, j = rng.integers(0, 3000, 2)
            if i == j:
                continue
            (within if labels[i] == labels[j] else across).append(np.linalg.norm(x[i] - x[j]))
        assert np.mean(within[:1000]) < np.mean(across[:1000])

    def test_stable_verdict(self):
        def make(m, seed):
            return split_queries(gen_clustered(1050, m, seed=seed), 50)

        reps = stability_sweep(make, [16, 64, 256, 1024, 4096], lambda qd: pairwise_distances(*qd), seed=0)
        assert verdict(reps).evidence is Evidence.STABLE

    @pytest.mark.parametrize("kw", [{"n_clusters": 1}, {"spread": 0.0}])
    def test_errors(self, kw):
        with pytest.raises(GeneratorError):
            gen_clustered(10, 4, **kw)


class TestEqualComponent:
    def test_constant_rows(self):
        x = gen_equal_component(30, 9, seed=1)
        assert np.all(x == x[:, :1])

    @pytest.mark.parametrize("p", [1.0, 1.5, 2.0])
    def test_distance_formula(self, p):
        x = gen_equal_component(2, 50, seed=8)
        assert Metric.lp(p)(x[0], x[1]) == pytest.approx(50 ** (1 / p) * abs(x[0, 0] - x[1, 0]), rel=1e-12)

    def test_relvar_flat(self):
        out = []
        for m in (16, 4096):
            q, d = split_queries(gen_equal_component(400, m, seed=2), 20)
            out.append(relvar(pairwise_distances(q, d)))
        assert max(out) / min(out) < 2


class TestAntipodal:
    def test_defaults_and_shapes(self):
        prob = gen_antipodal_multivec(m=16, seed=1)
        assert len(prob.documents) == 1000 and len(prob.queries) == 100
        assert all(len(s) == 4 for s in prob.queries)
        assert all(len(s) == 8 for s in prob.documents)
        assert prob.metric == COSINE

    def test_exact_negation_closure(self):
        prob = gen_antipodal_multivec(40, 5, 3, 32, seed=2, exact_negation=True)
        for s in prob.documents:
            rows = {r.tobytes() for r in s.vectors}
            assert all((-r).tobytes() in rows for r in s.vectors)

    def test_exact_negation_avg_pool_is_one(self, rng):
        prob = gen_antipodal_multivec(20, 5, 4, 64, seed=3, exact_negation=True)
        vals = [avg_pool(q, d, COSINE) for q in prob.queries for d in prob.documents]
        np.testing.assert_allclose(vals, 1.0, atol=1e-12)

    def test_noisy_negation_avg_pool_near_one(self):
        prob = gen_antipodal_multivec(50, 10, 4, 256, noise=0.1, seed=3)
        vals = np.array([avg_pool(q, d, COSINE) for q in prob.queries for d in prob.documents])
        assert np.all(np.abs(vals - 1) < 0.05)

    def test_negated_partner_is_close(self):
        prob = gen_antipodal_multivec(30, 2, 4, 128, noise=0.1, seed=5)
        for s in prob.documents:
            pos, neg = s.vectors[:4], s.vectors[4:]
            assert np.all(np.linalg.norm(pos + neg, axis=1) < 0.5)

    def test_errors(self):
        with pytest.raises(GeneratorError):
            gen_antipodal_multivec(10, 2, 0, 8)
        with pytest.raises(GeneratorError):
            gen_antipodal_multivec(10, 2, 2, 8, noise=-1)


class TestFiltered:
    @pytest.mark.parametrize("p, n", [(0.5, 200), (0.3, 101), (0.01, 50)])
    def test_exact_mismatch_count(self, p, n):
        q, d = gen_filtered(n, 7, 16, p_mismatch=p, seed=1)
        mis = mismatch_matrix(q, d, FilterKind.SUBSET)
        assert np.all(mis == mis[:1])
        assert mis[0].sum() == math.ceil(p * n)

    def test_half_mismatch(self):
        q, d = gen_filtered(1000, 10, 32, seed=2)
        assert mismatch_matrix(q, d, FilterKind.SUBSET).mean() == 0.5

    def test_unit_norm(self):
        q, d = gen_filtered(100, 10, 32, seed=3)
        norms = np.linalg.norm([p.vector for p in q + d], axis=1)
        np.testing.assert_allclose(norms, 1.0, atol=1e-6)

    def test_distance_anticorrelates_with_mismatch(self):
        q, d = gen_filtered(2000, 50, 32, seed=4)
        dist = pairwise_distances([p.vector for p in q], [p.vector for p in d], L2).ravel()
        mis = mismatch_matrix(q, d, FilterKind.SUBSET).ravel().astype(float)
        assert np.cov(dist, mis)[0, 1] < 0

    @pytest.mark.parametrize("p", [0.0, 1.0])
    def test_bad_p(self, p):
        with pytest.raises(GeneratorError):
            gen_filtered(10, 2, 4, p_mismatch=p)


class TestSparse:
    M = 4096

    @pytest.mark.parametrize("regime", list(SparseRegime))
    def test_invariants(self, regime):
        vecs = gen_sparse_semantic(50, self.M, 128, regime=regime, seed=1)
        assert len(vecs) == 50
        for v in vecs:
            assert v.dim == self.M and v.nnz == 128
            assert np.all(np.diff(v.indices) > 0) and np.all(v.values > 0)
            assert lp_norm(v.values, 2) == pytest.approx(1.0, abs=1e-6)

    def test_p_one_normalised(self):
        v = gen_sparse_semantic(5, 512, 32, p=1.0, seed=0)[0]
        assert v.values.sum() == pytest.approx(1.0, abs=1e-6)

    def test_concentrated_calibration(self):
        vecs = gen_sparse_semantic(500, self.M, regime=SparseRegime.COI_AND_OVERLAP, seed=2)
        kappa = sparse_defaults()["head_size"]
        assert np.mean([coi(v, kappa) >= 0.83 for v in vecs]) >= 0.95

    def test_coi_only_rarely_overlaps(self):
        vecs = gen_sparse_semantic(400, self.M, regime=SparseRegime.COI_ONLY, seed=3)
        stats = [overlap_stat(vecs[i], vecs[200 + i], 8) for i in range(200)]
        assert overlap_params_from_stats(stats).pi_max < 0.05

    def test_shared_heads_overlap_about_half(self):
        vecs = gen_sparse_semantic(800, self.M, regime=SparseRegime.COI_AND_OVERLAP, seed=3)
        stats = [overlap_stat(vecs[i], vecs[400 + i], 8) for i in range(400)]
        assert 0.4 < overlap_params_from_stats(stats).pi_max < 0.6

    def test_neither_fails_both(self):
        vecs = gen_sparse_semantic(400, self.M, regime=SparseRegime.NEITHER, seed=3)
        assert np.mean([coi(v, 64) >= 0.83 for v in vecs]) < 0.9
        stats = [overlap_stat(vecs[i], vecs[200 + i], 8) for i in range(200)]
        assert overlap_params_from_stats(stats).pi_max < 0.05

    def test_errors(self):
        with pytest.raises(GeneratorError):
            gen_sparse_semantic(3, 64, nnz=128)
        with pytest.raises(GeneratorError):
            gen_sparse_semantic(3, 4096, zipf_s=0)
        with pytest.raises(GeneratorError):
            gen_sparse_semantic(3, 4096, bogus=1)
