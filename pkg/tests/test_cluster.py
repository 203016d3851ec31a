import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.spatial.distance import squareform

from fdakit.cluster import (DistanceMatrix, distance_matrix, hclust_complete, kmeans, kmeans_scores, rand_index,
                            score_embedding)
from fdakit.exceptions import DimensionError, InputError, InsufficientSampleError
from fdakit.fdcore import FunctionalSample, Grid, l2_distance

GRID = Grid.linspace(0, 1, 41)


def agglomerate_oracle(D, k):
    """Replay complete linkage on explicit member sets, recomputing every distance."""
    clusters = [frozenset([i]) for i in range(D.shape[0])]
    while len(clusters) > k:
        best = None
        for A, B in itertools.combinations(clusters, 2):
            d = max(D[a, b] for a in A for b in B)
            key = (d, *sorted((min(A), min(B))))
            if best is None or key < best[0]:
                best = (key, A, B)
        _, A, B = best
        clusters = [c for c in clusters if c not in (A, B)] + [A | B]
    return canonical(clusters, D.shape[0])


def canonical(clusters, n):
    labels = np.empty(n, dtype=int)
    for c in clusters:
        labels[list(c)] = min(c)
    return first_appearance(labels)


def first_appearance(raw):
    seen = {}
    return np.array([seen.setdefault(r, len(seen) + 1) for r in raw])


def partitions(items, k):
    """All set partitions of ``items`` into exactly ``k`` blocks."""
    if k == 0:
        if not items:
            yield []
        return
    if len(items) < k:
        return
    first, rest = items[0], items[1:]
    for p in partitions(rest, k - 1):
        yield [[first]] + p
    for p in partitions(rest, k):
        for i in range(len(p)):
            yield p[:i] + [[first] + p[i]] + p[i + 1 :]


def min_diameter_partition(D, k):
    best = min(partitions(list(range(D.shape[0])), k),
               key=lambda p: max((D[a, b] for blk in p for a in blk for b in blk), default=0.0))
    return canonical([frozenset(b) for b in best], D.shape[0])


def random_distances(rng, n, ties=False):
    if ties:
        D = rng.integers(1, 4, (n, n)).astype(float)
    else:
        P = rng.normal(size=(n, 2))
        D = np.linalg.norm(P[:, None] - P[None, :], axis=-1)
    D = np.triu(D, 1)
    return D + D.T


def blobs(rng, sizes=(15, 15), sep=10.0, dim=2):
    centers = np.zeros((len(sizes), dim))
    centers[:, 0] = sep * np.arange(len(sizes))
    labels = np.repeat(np.arange(len(sizes)), sizes)
    return centers[labels] + rng.standard_normal((labels.size, dim)), labels


class TestDistanceMatrix:
    def test_identical_curves(self):
        D = distance_matrix(FunctionalSample(GRID, np.ones((4, 41))))
        np.testing.assert_array_equal(D.matrix, 0)

    def test_two_curves(self, rng):
        X = rng.normal(size=(2, 41))
        D = distance_matrix(FunctionalSample(GRID, X))
        assert D.matrix[0, 1] == pytest.approx(float(l2_distance(X[0], X[1], GRID)), rel=1e-12)

    def test_scores_oracle(self, rng):
        s = FunctionalSample(GRID, rng.normal(size=(12, 41)).cumsum(axis=1))
        D = distance_matrix(s, "fpca_scores", M=3)
        model = D.model
        S = (s.values - model.mean) @ (GRID.weights[:, None] * model.eigenfunctions.T)
        oracle = np.linalg.norm(S[:, None] - S[None, :], axis=-1)
        np.testing.assert_allclose(D.matrix, oracle, atol=1e-8)

    def test_invariants(self, rng):
        D = distance_matrix(FunctionalSample(GRID, rng.normal(size=(7, 41))))
        np.testing.assert_array_equal(D.matrix, D.matrix.T)
        assert np.all(np.diag(D.matrix) == 0)

    def test_validation(self):
        with pytest.raises(DimensionError):
            DistanceMatrix(np.zeros((2, 3)), "x")
        with pytest.raises(InputError):
            DistanceMatrix(np.array([[0, 1], [2, 0.0]]), "x")
        with pytest.raises(InputError):
            DistanceMatrix(np.array([[0, -1], [-1, 0.0]]), "x")

    def test_too_few(self, rng):
        with pytest.raises(InsufficientSampleError):
            distance_matrix(FunctionalSample(GRID, rng.normal(size=(1, 41))))
        with pytest.raises(InputError):
            distance_matrix(FunctionalSample(GRID, rng.normal(size=(3, 41))), "dtw")


class TestHclust:
    def test_k_extremes(self, rng):
        D = random_distances(rng, 6)
        np.testing.assert_array_equal(hclust_complete(D, 6).labels, np.arange(1, 7))
        np.testing.assert_array_equal(hclust_complete(D, 1).labels, np.ones(6))

    def test_two_far_pairs(self):
        P = np.array([0.0, 0.1, 10.0, 10.2])
        D = np.abs(P[:, None] - P[None, :])
        res = hclust_complete(D, 2)
        np.testing.assert_array_equal(res.labels, [1, 1, 2, 2])
        np.testing.assert_array_equal(res.labels, min_diameter_partition(D, 2))

    @settings(max_examples=60, deadline=None)
    @given(st.integers(2, 8), st.integers(0, 2**32 - 1), st.booleans())
    def test_matches_agglomeration_oracle(self, n, seed, ties):
        r = np.random.default_rng(seed)
        D = random_distances(r, n, ties)
        for k in range(1, n + 1):
            np.testing.assert_array_equal(hclust_complete(D, k).labels, agglomerate_oracle(D, k))

    @pytest.mark.parametrize("seed", range(5))
    def test_separated_data_matches_partition_oracle(self, seed):
        r = np.random.default_rng(seed)
        X, _ = blobs(r, (3, 2, 3), sep=20.0)
        D = np.linalg.norm(X[:, None] - X[None, :], axis=-1)
        np.testing.assert_array_equal(hclust_complete(D, 3).labels, min_diameter_partition(D, 3))

    @pytest.mark.parametrize("seed", range(20))
    def test_matches_scipy_without_ties(self, seed):
        r = np.random.default_rng(seed)
        D = random_distances(r, 12)
        Z = linkage(squareform(D, checks=False), "complete")
        res = hclust_complete(D, 4)
        np.testing.assert_array_equal(res.labels, first_appearance(fcluster(Z, 4, "maxclust")))
        np.testing.assert_allclose([m[2] for m in res.merges], Z[:, 2], rtol=1e-12)

    def test_heights_nondecreasing(self, rng):
        res = hclust_complete(random_distances(rng, 15), 1)
        heights = [m[2] for m in res.merges]
        assert len(heights) == 14 and np.all(np.diff(heights) >= 0)

    def test_k_out_of_range(self, rng):
        for k in (0, 5):
            with pytest.raises(InputError):
                hclust_complete(random_distances(rng, 4), k)


class TestKmeans:
    def test_k_equals_n(self, rng):
        res = kmeans(rng.normal(size=(6, 2)), 6, restarts=3)
        assert res.wcss == 0.0
        assert sorted(res.labels) == list(range(1, 7))

    @pytest.mark.parametrize("seed", range(20))
    def test_blob_recovery(self, seed):
        X, truth = blobs(np.random.default_rng(1000 + seed))
        res = kmeans(X, 2, seed=seed)
        assert rand_index(res.labels, truth) == 1.0

    def test_lloyd_monotone_and_best_of(self, rng):
        X, _ = blobs(rng, (20, 20, 20), sep=2.0)
        res = kmeans(X, 3, restarts=8, seed=3)
        assert np.all(np.diff(res.history) <= 1e-10)
        assert res.wcss == res.run_wcss.min()
        assert res.wcss == pytest.approx(sum(np.sum((X[res.labels == c] - res.centroids[c - 1]) ** 2)
                                             for c in range(1, 4)))

    def test_deterministic_across_threads(self, rng):
        X, _ = blobs(rng, (25, 25, 25), sep=3.0)
        a = kmeans(X, 3, seed=11, threads=1)
        b = kmeans(X, 3, seed=11, threads=4)
        np.testing.assert_array_equal(a.labels, b.labels)
        np.testing.assert_array_equal(a.run_wcss, b.run_wcss)

    def test_empty_cluster_repair(self):
        X = np.array([[0.0], [0.0], [0.0], [10.0]])
        res = kmeans(X, 3, restarts=5)
        assert sorted(set(res.labels)) == [1, 2, 3]

    def test_validation(self, rng):
        with pytest.raises(InputError):
            kmeans(rng.normal(size=(3, 2)), 4)
        with pytest.raises(InputError):
            kmeans(rng.normal(size=(3, 2)), 2, restarts=0)


class TestScoreClustering:
    def _bundles(self, rng):
        t = GRID.points
        base = [np.sin(2 * np.pi * t), 3 + np.cos(2 * np.pi * t)]
        X = np.vstack([b + 0.05 * rng.normal(size=(10, 1)) * t for b in base])
        return FunctionalSample(GRID, X), np.repeat([1, 2], 10)

    def test_kmeans_scores_recovers_bundles(self, rng):
        s, truth = self._bundles(rng)
        assert rand_index(kmeans_scores(s, 2, 2, seed=0).labels, truth) == 1.0

    def test_methods_agree_on_separated_bundles(self, rng):
        s, _ = self._bundles(rng)
        h = hclust_complete(distance_matrix(s), 2)
        k = kmeans_scores(s, 2, 2, seed=5)
        assert rand_index(h.labels, k.labels) == 1.0

    def test_score_embedding_caps_components(self, rng):
        S, model = score_embedding(FunctionalSample(GRID, rng.normal(size=(3, 41))), 5)
        assert S.shape == (3, 2)

    def test_validation(self, rng):
        s = FunctionalSample(GRID, rng.normal(size=(4, 41)))
        with pytest.raises(InputError):
            kmeans_scores(s, 2, 5)
        with pytest.raises(InputError):
            kmeans_scores(s, 0, 2)


class TestRandIndex:
    def test_relabeling_invariance(self, rng):
        a = rng.integers(0, 3, 30)
        b = rng.integers(0, 3, 30)
        perm = np.array([2, 0, 1])
        assert rand_index(a, b) == pytest.approx(rand_index(perm[a], b))
        assert rand_index(a, perm[a]) == 1.0

    def test_against_pair_counting(self, rng):
        a = rng.integers(0, 3, 15)
        b = rng.integers(0, 2, 15)
        agree = sum((a[i] == a[j]) == (b[i] == b[j]) for i, j in itertools.combinations(range(15), 2))
        assert rand_index(a, b, adjusted=False) == pytest.approx(agree / 105)

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            rand_index([1, 2], [1, 2, 3])
