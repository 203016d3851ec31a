"""Modified band depth and the functional boxplot."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InsufficientSampleError
from .fdcore import FunctionalSample

FENCE_FACTOR = 1.5


@dataclass(frozen=True)
class DepthReport:
    depths: np.ndarray
    ordering: np.ndarray  # curve indices, deepest first
    median: int


@dataclass(frozen=True)
class BoxplotResult:
    lower: np.ndarray
    upper: np.ndarray
    lower_fence: np.ndarray
    upper_fence: np.ndarray
    outliers: np.ndarray  # bool per curve
    median: int
    central: np.ndarray  # indices of the curves spanning the central region
    depth: DepthReport


def _values(sample):
    if isinstance(sample, FunctionalSample):
        return sample.values
    return np.atleast_2d(np.asarray(sample, dtype=float))


def band_counts(values) -> np.ndarray:
    """Integer count, per curve, of (pair, grid point) bands containing it.

    For curve ``i`` at ``t_v`` with ``a`` curves ``<= x_i`` and ``b`` curves
    ``>= x_i`` (both counting ``i`` itself), the pairs whose band misses
    ``x_i`` are those lying strictly below or strictly above it.
    """
    X = np.asarray(values, dtype=float)
    n = X.shape[0]
    s = np.sort(X, axis=0)
    n_le = np.empty_like(X, dtype=np.int64)
    n_ge = np.empty_like(X, dtype=np.int64)
    for v in range(X.shape[1]):
        n_le[:, v] = np.searchsorted(s[:, v], X[:, v], side="right")
        n_ge[:, v] = n - np.searchsorted(s[:, v], X[:, v], side="left")
    below = n - n_ge
    above = n - n_le
    pairs = n * (n - 1) // 2
    inside = pairs - below * (below - 1) // 2 - above * (above - 1) // 2
    return inside.sum(axis=1)


def _order(depths):
    # deepest first, ties to the lower index
    return np.lexsort((np.arange(depths.size), -depths))


def modified_band_depth(sample) -> DepthReport:
    """Modified band depth with bands formed by pairs of curves.

    Every unordered pair ``j < k`` of the sample (pairs containing the curve
    itself included) contributes the fraction of grid points at which the
    curve lies inside ``[min(x_j, x_k), max(x_j, x_k)]``, boundaries inclusive.
    """
    X = _values(sample)
    n, V = X.shape
    if n < 3:
        raise InsufficientSampleError(f"modified band depth needs n >= 3 curves, got {n}")
    counts = band_counts(X)
    depths = counts / (n * (n - 1) // 2 * V)
    order = _order(depths)
    return DepthReport(depths, order, int(order[0]))


def functional_boxplot(sample, factor: float = FENCE_FACTOR) -> BoxplotResult:
    """Functional boxplot from modified band depth.

    The central region envelops the ``ceil(n/2)`` deepest curves; fences
    extend each side of the region by ``factor`` times its pointwise height.
    A curve is an outlier when it leaves the fences at any grid point.
    """
    X = _values(sample)
    n = X.shape[0]
    if n < 4:
        raise InsufficientSampleError(f"functional boxplot needs n >= 4 curves, got {n}")
    rep = modified_band_depth(X)
    central = np.sort(rep.ordering[: int(np.ceil(n / 2))])
    lower = X[central].min(axis=0)
    upper = X[central].max(axis=0)
    height = upper - lower
    lower_fence = lower - factor * height
    upper_fence = upper + factor * height
    outliers = np.any((X < lower_fence) | (X > upper_fence), axis=1)
    return BoxplotResult(lower, upper, lower_fence, upper_fence, outliers, rep.median, central, rep)


def depth_colors(sample) -> np.ndarray:
    """Depth rank scaled to [0, 1] per curve (deepest -> 1, shallowest -> 0)."""
    X = _values(sample)
    n = X.shape[0]
    if n < 2:
        raise InsufficientSampleError("depth colors need at least 2 curves")
    if n == 2:
        # MBD needs three curves; two curves are equally deep
        order = np.array([0, 1])
    else:
        order = modified_band_depth(X).ordering
    rank = np.empty(n)
    # position 0 is the deepest curve
    rank[order] = (n - 1 - np.arange(n)) / (n - 1)
    return rank
