import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from vecstab.aggregation import (
    AVG_POOL,
    CHAMFER,
    MultiVectorProblem,
    VectorSet,
    agg_distance_matrix,
    avg_pool,
    chamfer,
    induced_instance,
)
from vecstab.vectors import COSINE, L2, VectorError, pairwise_distances

E1, E2 = (1.0, 0.0), (0.0, 1.0)


def test_chamfer_hand_values():
    assert chamfer([E1, E2], [E1], L2) == pytest.approx(math.sqrt(2))
    assert chamfer([E1], [E1, (-1.0, 0.0)], COSINE) == 0.0


def test_avg_pool_hand_values():
    assert avg_pool([E1], [E1, (-1.0, 0.0)], COSINE) == pytest.approx(1.0)
    assert avg_pool([E1, E2], [E1], L2) == pytest.approx(math.sqrt(2) / 2)


def test_singletons_reduce_to_primitive(rng):
    a, b = rng.standard_normal(5), rng.standard_normal(5)
    d = L2(a, b)
    assert chamfer([a], [b]) == pytest.approx(d)
    assert avg_pool([a], [b]) == pytest.approx(d)


def test_chamfer_is_not_symmetric():
    a = [E1, E2]
    b = [E1]
    assert chamfer(a, b) != chamfer(b, a)


def test_set_validation():
    with pytest.raises(VectorError):
        VectorSet(np.empty((0, 3)))
    with pytest.raises(VectorError):
        chamfer([[1.0, 2.0]], [[1.0, 2.0, 3.0]])
    with pytest.raises(VectorError):
        MultiVectorProblem([[E1], [E1, E2]], [[E1]])


def _sets(rng, n, size, m):
    return [rng.standard_normal((size, m)) for _ in range(n)]


@given(st.integers(0, 2**32 - 1), st.integers(1, 5), st.integers(1, 5))
def test_chamfer_bounds(seed, na, nb):
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal((na, 4)), rng.standard_normal((nb, 4))
    c = chamfer(a, b)
    assert 0.0 <= c <= na * pairwise_distances(a, b).max() + 1e-12


@given(st.integers(0, 2**32 - 1))
def test_avg_pool_symmetric_bitwise(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal((3, 6)), rng.standard_normal((7, 6))
    assert avg_pool(a, b) == avg_pool(b, a)


@given(st.integers(0, 2**32 - 1))
def test_chamfer_singleton_reduction(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal((1, 8)), rng.standard_normal((6, 8))
    assert chamfer(a, b) == pytest.approx(pairwise_distances(a, b).min(), rel=1e-12)


class TestInducedInstance:
    def test_shared_vector_appears_once(self):
        shared = np.array([0.5, 0.5])
        p = MultiVectorProblem([[shared, E1], [shared, E2]], [[E1]])
        q, d = induced_instance(p)
        assert q.shape == (3, 2)
        assert d.shape == (1, 2)

    def test_disjoint_sets_keep_all(self, rng):
        p = MultiVectorProblem(_sets(rng, 4, 3, 5), _sets(rng, 6, 2, 5))
        q, d = induced_instance(p)
        assert q.shape[0] == 12 and d.shape[0] == 12

    def test_singleton_problem(self, rng):
        qs, ds = _sets(rng, 1, 3, 4), _sets(rng, 1, 5, 4)
        q, d = induced_instance(MultiVectorProblem(qs, ds))
        np.testing.assert_array_equal(q, qs[0])
        np.testing.assert_array_equal(d, ds[0])


@pytest.mark.parametrize("agg, fn", [(CHAMFER, chamfer), (AVG_POOL, avg_pool)])
@pytest.mark.parametrize("metric", [L2, COSINE])
def test_matrix_matches_per_pair_recomputation(rng, agg, fn, metric):
    p = MultiVectorProblem(_sets(rng, 10, 3, 6), _sets(rng, 50, 4, 6), metric)
    mat = agg_distance_matrix(p, agg)
    oracle = np.array([[fn(q, d, metric) for d in p.documents] for q in p.queries])
    assert mat.shape == (10, 50)
    np.testing.assert_allclose(mat, oracle, rtol=1e-12, atol=1e-12)
    if agg == CHAMFER:
        assert np.array_equal(mat, oracle)


def test_matrix_ragged_documents(rng):
    docs = [rng.standard_normal((s, 4)) for s in (1, 3, 2, 5)]
    p = MultiVectorProblem(_sets(rng, 3, 2, 4), docs)
    for agg, fn in ((CHAMFER, chamfer), (AVG_POOL, avg_pool)):
        oracle = [[fn(q, d) for d in p.documents] for q in p.queries]
        np.testing.assert_allclose(agg_distance_matrix(p, agg), oracle, rtol=1e-12)


def test_matrix_trivial_cases(rng):
    q, d = rng.standard_normal((2, 3)), rng.standard_normal((4, 3))
    one = MultiVectorProblem([q], [d])
    assert agg_distance_matrix(one, AVG_POOL)[0, 0] == avg_pool(q, d)
    same = MultiVectorProblem(_sets(rng, 3, 2, 3), [d, d.copy(), d.copy()])
    mat = agg_distance_matrix(same, CHAMFER)
    assert np.all(mat == mat[:, :1])
    with pytest.raises(ValueError):
        agg_distance_matrix(one, "maxsim")


positive = st.floats(1e-3, 1e3, allow_nan=False, allow_infinity=False)


@given(st.integers(1, 20).flatmap(lambda n: st.tuples(arrays(np.float64, n, elements=positive), arrays(np.float64, n, elements=positive))))
def test_dans_favorite_inequality(ab):
    a, b = ab
    ratio = a / b
    mid = a.sum() / b.sum()
    assert ratio.min() * (1 - 1e-12) <= mid <= ratio.max() * (1 + 1e-12)


def test_dans_inequality_on_chamfer_terms(rng):
    # the Chamfer ratio of two document sets is sandwiched by per-query-vector ratios
    for _ in range(1000):
        q = rng.standard_normal((4, 6))
        d1, d2 = rng.standard_normal((5, 6)), rng.standard_normal((5, 6))
        a = pairwise_distances(q, d1).min(axis=1)
        b = pairwise_distances(q, d2).min(axis=1)
        r = chamfer(q, d1) / chamfer(q, d2)
        assert (a / b).min() * (1 - 1e-12) <= r <= (a / b).max() * (1 + 1e-12)
