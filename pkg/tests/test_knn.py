import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from poison_scan import kdist, knn, pairwise_distances
from poison_scan.errors import DimMismatch, KTooLarge

from oracle import full_distances, naive_knn


def test_pairwise_examples():
    assert pairwise_distances([[0.0, 0.0]], [[3.0, 4.0]]).tolist() == [[5.0]]
    assert pairwise_distances([[1.0, 2.0]], [[1.0, 2.0]]).tolist() == [[0.0]]
    assert pairwise_distances([[0.0], [1.0]], [[0.0], [2.0]]).tolist() == [[0.0, 2.0], [1.0, 1.0]]
    with pytest.raises(DimMismatch):
        pairwise_distances([[0.0]], [[0.0, 1.0]])


def test_pairwise_symmetric(rng):
    x = rng.normal(size=(40, 7))
    d = pairwise_distances(x, x)
    assert np.array_equal(d, d.T)
    assert np.all(np.diag(d) == 0)


def test_knn_line():
    x = np.array([[0.0], [1.0], [3.0], [7.0]])
    ns = knn(x[:1], x, 2, self_index=[0])
    assert ns.distances.tolist() == [[1.0, 3.0]]
    assert ns.indices.tolist() == [[1, 2]]
    assert kdist(ns).tolist() == [3.0]


def test_knn_duplicates_are_neighbours():
    x = np.array([[0.0], [0.0], [5.0]])
    ns = knn(x[:1], x, 1, self_index=[0])
    assert ns.distances.tolist() == [[0.0]]
    assert ns.indices.tolist() == [[1]]
    assert kdist(knn(x[:1], x, 1, self_index=[0])).tolist() == [0.0]


def test_k_too_large():
    x = np.zeros((4, 2))
    with pytest.raises(KTooLarge):
        knn(x, x, 4, self_index=np.arange(4))
    knn(x, x, 4)  # without self-exclusion all four are available


def test_ties_break_by_index():
    # a lattice: every interior point has two neighbours at exactly 1
    x = np.arange(6, dtype=np.float64)[:, None]
    ns = knn(x, x, 2, self_index=np.arange(6))
    assert ns.indices[2].tolist() == [1, 3]
    assert ns.distances[2].tolist() == [1.0, 1.0]


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 160), st.integers(1, 32), st.integers(0, 2**32 - 1), st.data())
def test_matches_exhaustive_oracle(n, d, seed, data):
    x = np.random.default_rng(seed).normal(size=(n, d))
    k = data.draw(st.integers(1, n - 1))
    ns = knn(x, x, k, self_index=np.arange(n))
    for i, (dist, idx) in enumerate(naive_knn(x, k)):
        assert ns.indices[i].tolist() == idx
        np.testing.assert_allclose(ns.distances[i], dist, rtol=1e-9, atol=0)


@settings(max_examples=25, deadline=None)
@given(st.integers(3, 80), st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_duplicated_points_match_oracle(n, d, seed):
    rng = np.random.default_rng(seed)
    base = rng.normal(size=(n, d))
    x = np.concatenate([base, base[: n // 2]])
    k = min(5, len(x) - 1)
    ns = knn(x, x, k, self_index=np.arange(len(x)))
    for i, (dist, idx) in enumerate(naive_knn(x, k)):
        assert ns.indices[i].tolist() == idx
        np.testing.assert_allclose(ns.distances[i], dist, rtol=1e-9, atol=0)


def test_separate_queries_and_refs(rng):
    q = rng.normal(size=(30, 5))
    r = rng.normal(size=(70, 5))
    ns = knn(q, r, 7)
    d = full_distances(q, r)
    order = np.argsort(d, axis=1, kind="stable")[:, :7]
    assert np.array_equal(ns.indices, order)
    np.testing.assert_allclose(ns.distances, np.take_along_axis(d, order, axis=1), rtol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(20, 120), st.integers(0, 2**32 - 1))
def test_prefix_monotonicity(n, seed):
    x = np.random.default_rng(seed).normal(size=(n, 6))
    big = knn(x, x, 15, self_index=np.arange(n))
    small = knn(x, x, 6, self_index=np.arange(n))
    assert np.array_equal(small.indices, big.indices[:, :6])
    assert np.array_equal(small.distances, big.distances[:, :6])


def test_large_query_block_uses_exact_distances(rng):
    # more queries than one internal chunk, unit vectors as in real use
    x = rng.normal(size=(1500, 64))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    ns = knn(x, x, 16, self_index=np.arange(1500))
    sample = rng.choice(1500, size=40, replace=False)
    for i, (dist, idx) in zip(sample, naive_knn(x, 16, sample)):
        assert ns.indices[i].tolist() == idx
        np.testing.assert_allclose(ns.distances[i], dist, rtol=1e-9, atol=0)


def test_deterministic(rng):
    x = rng.normal(size=(700, 20))
    a = knn(x, x, 9, self_index=np.arange(700))
    b = knn(x, x, 9, self_index=np.arange(700))
    assert a.distances.tobytes() == b.distances.tobytes()
    assert a.indices.tobytes() == b.indices.tobytes()


def test_all_equidistant_falls_back_to_index_order():
    # one-hot rows: every pair is sqrt(2) apart, so no candidate cut can be certified
    x = np.eye(40)
    ns = knn(x, x, 3, self_index=np.arange(40))
    assert ns.indices[0].tolist() == [1, 2, 3]
    assert ns.indices[39].tolist() == [0, 1, 2]
    np.testing.assert_allclose(ns.distances, np.sqrt(2.0), rtol=1e-15)
