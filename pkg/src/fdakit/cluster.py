"""Distance matrices, complete-linkage hierarchical clustering and k-means on scores."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial.distance import cdist

from .exceptions import DimensionError, InputError, InsufficientSampleError
from .fdcore import FunctionalSample
from .fpca import FpcaModel, fit_fpca

DISTANCE_KINDS = ("raw_l2", "fpca_scores")
DEFAULT_RESTARTS = 10
LLOYD_MAX_ITER = 300


@dataclass(frozen=True)
class DistanceMatrix:
    matrix: np.ndarray
    kind: str
    curve_ids: tuple = ()
    scores: Optional[np.ndarray] = field(default=None, repr=False)
    model: Optional[FpcaModel] = field(default=None, repr=False)

    def __post_init__(self):
        D = np.asarray(self.matrix, dtype=float)
        if D.ndim != 2 or D.shape[0] != D.shape[1]:
            raise DimensionError("distance matrix must be square")
        if np.any(~np.isfinite(D)) or np.any(D < 0):
            raise InputError("distances must be finite and nonnegative")
        if not np.allclose(D, D.T, rtol=0, atol=1e-12 * max(1.0, float(D.max(initial=0.0)))):
            raise InputError("distance matrix is not symmetric")
        D = (D + D.T) / 2
        np.fill_diagonal(D, 0.0)
        D.setflags(write=False)
        object.__setattr__(self, "matrix", D)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


def score_embedding(sample: FunctionalSample, M: int):
    """Integration scores on the first ``M`` components of an unsmoothed FPCA."""
    if M < 1:
        raise InputError("need at least one score component")
    M = min(int(M), sample.n - 1, len(sample.grid))
    model = fit_fpca(sample, n_components=M, smooth_covariance=False)
    return model.scores, model


def distance_matrix(sample: FunctionalSample, kind: str = "raw_l2", M: int = 2) -> DistanceMatrix:
    """Pairwise L2 distances of the raw curves or Euclidean distances of FPCA scores."""
    if sample.n < 2:
        raise InsufficientSampleError("a distance matrix needs at least 2 curves")
    if kind == "raw_l2":
        E = sample.values * np.sqrt(sample.grid.weights)
        return DistanceMatrix(_symmetric(cdist(E, E)), kind, sample.curve_ids)
    if kind == "fpca_scores":
        S, model = score_embedding(sample, M)
        return DistanceMatrix(_symmetric(cdist(S, S)), kind, sample.curve_ids, S, model)
    raise InputError(f"unknown distance kind {kind!r}; choose from {', '.join(DISTANCE_KINDS)}")


def _symmetric(D):
    D = (D + D.T) / 2
    np.fill_diagonal(D, 0.0)
    return D


@dataclass
class ClusterResult:
    labels: np.ndarray  # 1..k, numbered by first appearance in curve order
    k: int
    method: str
    merges: Optional[list] = None  # (left, right, height) with scipy-style cluster ids
    centroids: Optional[np.ndarray] = None
    wcss: Optional[float] = None
    history: Optional[list] = None  # WCSS after each Lloyd iteration of the best run
    run_wcss: Optional[np.ndarray] = None


def _relabel(raw) -> np.ndarray:
    _, first, inverse = np.unique(raw, return_index=True, return_inverse=True)
    rank = np.empty(first.size, dtype=np.int64)
    rank[np.argsort(first)] = np.arange(1, first.size + 1)
    return rank[inverse]


def hclust_complete(dist, k: int) -> ClusterResult:
    """Agglomerative clustering with complete linkage, cut at ``k`` clusters.

    A cluster is indexed by its smallest member; at each step the closest pair
    of clusters merges, ties going to the lexicographically smallest index
    pair. The merge history holds all ``n - 1`` merges with scipy-style ids
    (leaves ``0..n-1``, the ``m``-th merge creates cluster ``n + m``).
    """
    D = dist.matrix if isinstance(dist, DistanceMatrix) else DistanceMatrix(dist, "custom").matrix
    n = D.shape[0]
    if not 1 <= k <= n:
        raise InputError(f"k must lie in [1, {n}], got {k}")
    C = D.astype(float).copy()
    np.fill_diagonal(C, np.inf)
    active = np.ones(n, dtype=bool)
    node = np.arange(n)
    owner = np.arange(n)  # representative of each curve's cluster
    merges = []
    labels_at_k = owner.copy() if k == n else None
    for m in range(n - 1):
        masked = np.where(active[:, None] & active[None, :], C, np.inf)
        masked[np.tril_indices(n)] = np.inf
        flat = int(np.argmin(masked))  # first minimum in row-major order = smallest (i, j)
        i, j = divmod(flat, n)
        h = float(C[i, j])
        merges.append((int(node[i]), int(node[j]), h))
        row = np.maximum(C[i], C[j])
        C[i, :] = row
        C[:, i] = row
        C[i, i] = np.inf
        active[j] = False
        node[i] = n + m
        owner[owner == j] = i
        if n - (m + 1) == k:
            labels_at_k = owner.copy()
    return ClusterResult(_relabel(labels_at_k), k, "hclust", merges=merges)


def _wcss(X, labels, centroids) -> float:
    return float(np.sum((X - centroids[labels]) ** 2))


def _seed_plus_plus(X, k, rng):
    n = X.shape[0]
    centers = [int(rng.integers(n))]
    d2 = np.sum((X - X[centers[0]]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            c = int(rng.choice(n, p=d2 / total))
        else:
            c = int(rng.integers(n))
        centers.append(c)
        d2 = np.minimum(d2, np.sum((X - X[c]) ** 2, axis=1))
    return X[centers].copy()


def _assign(X, centroids):
    d2 = cdist(X, centroids, "sqeuclidean")
    return np.argmin(d2, axis=1), d2


def _repair(X, labels, centroids, k):
    """Give every empty cluster the point farthest from its own centroid."""
    for c in range(k):
        if np.any(labels == c):
            continue
        sizes = np.bincount(labels, minlength=k)
        resid = np.sum((X - centroids[labels]) ** 2, axis=1)
        movable = sizes[labels] > 1
        resid = np.where(movable, resid, -np.inf)
        p = int(np.argmax(resid))
        labels[p] = c
        centroids[c] = X[p]
    return labels


def _lloyd(X, k, rng, max_iter):
    centroids = _seed_plus_plus(X, k, rng)
    labels, _ = _assign(X, centroids)
    history = []
    for _ in range(max_iter):
        labels = _repair(X, labels, centroids, k)
        centroids = np.array([X[labels == c].mean(axis=0) for c in range(k)])
        history.append(_wcss(X, labels, centroids))
        new, d2 = _assign(X, centroids)
        # keep the current cluster on ties so the iteration cannot cycle
        current = d2[np.arange(X.shape[0]), labels]
        new = np.where(d2[np.arange(X.shape[0]), new] < current, new, labels)
        if np.array_equal(new, labels):
            break
        labels = new
    return labels, centroids, history


def kmeans(points, k: int, restarts: int = DEFAULT_RESTARTS, seed: int = 0,
           max_iter: int = LLOYD_MAX_ITER, threads: Optional[int] = None) -> ClusterResult:
    """Best-of-``restarts`` Lloyd k-means with k-means++ seeding.

    Restart ``r`` uses the stream ``SeedSequence(seed).spawn(restarts)[r]``;
    the run with the smallest WCSS wins, earlier runs winning ties.
    """
    X = np.atleast_2d(np.asarray(points, dtype=float))
    n = X.shape[0]
    if not 1 <= k <= n:
        raise InputError(f"k must lie in [1, {n}], got {k}")
    if restarts < 1:
        raise InputError("need at least one restart")
    seqs = np.random.SeedSequence(seed).spawn(restarts)

    def run(ss):
        return _lloyd(X, k, np.random.default_rng(ss), max_iter)

    if threads is None or threads <= 1:
        runs = [run(s) for s in seqs]
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            runs = list(ex.map(run, seqs))
    finals = np.array([r[2][-1] for r in runs])
    best = int(np.argmin(finals))
    labels, centroids, history = runs[best]
    relabeled = _relabel(labels)
    order = np.empty(k, dtype=np.int64)
    order[relabeled - 1] = labels
    return ClusterResult(relabeled, k, "kmeans", centroids=centroids[order], wcss=float(finals[best]),
                         history=history, run_wcss=finals)


def kmeans_scores(sample: FunctionalSample, M: int, k: int, restarts: int = DEFAULT_RESTARTS, seed: int = 0,
                  threads: Optional[int] = None) -> ClusterResult:
    """k-means on the first ``M`` FPCA scores of the curves."""
    if M < 1:
        raise InputError("M must be at least 1")
    if k > sample.n:
        raise InputError(f"k={k} exceeds the number of curves ({sample.n})")
    if sample.n < 2:
        raise InsufficientSampleError("k-means on scores needs at least 2 curves")
    S, _ = score_embedding(sample, M)
    return kmeans(S, k, restarts, seed, threads=threads)


def rand_index(a, b, adjusted: bool = True) -> float:
    """(Adjusted) Rand index between two labelings."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise DimensionError("labelings differ in length")
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    table = np.zeros((ia.max() + 1, ib.max() + 1))
    np.add.at(table, (ia, ib), 1)

    def comb2(x):
        return x * (x - 1) / 2

    n = a.size
    total = comb2(n)
    sum_ij = comb2(table).sum()
    sum_a = comb2(table.sum(axis=1)).sum()
    sum_b = comb2(table.sum(axis=0)).sum()
    if not adjusted:
        return float((total + 2 * sum_ij - sum_a - sum_b) / total) if total else 1.0
    expected = sum_a * sum_b / total if total else 0.0
    top = (sum_a + sum_b) / 2
    if top == expected:
        return 1.0
    return float((sum_ij - expected) / (top - expected))
