"""One-way functional ANOVA with permutation, bootstrap and projection tests.

Every resampling test draws resample ``r`` from its own stream,
``SeedSequence(seed).spawn(R)[r]``, so results depend only on the seed and
never on how resamples are distributed over threads.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import stats

from .exceptions import DegenerateError, DimensionError, InputError, InsufficientSampleError
from .fdcore import FunctionalSample, inner_product

DEFAULT_RESAMPLES = 1000
DEFAULT_PROJECTIONS = 30
METHODS = ("ratio", "globalF", "supF", "l2means", "projections")


@dataclass(frozen=True)
class GroupedSample:
    sample: FunctionalSample
    labels: np.ndarray  # integer codes 0..g-1
    levels: tuple  # original group labels, in code order

    @classmethod
    def from_labels(cls, sample: FunctionalSample, labels) -> "GroupedSample":
        labels = np.asarray(labels)
        if labels.shape != (sample.n,):
            raise DimensionError("need exactly one group label per curve")
        levels, codes = np.unique(labels, return_inverse=True)
        if levels.size < 2:
            raise InputError("functional ANOVA needs at least 2 groups")
        codes.setflags(write=False)
        return cls(sample, codes, tuple(levels.tolist()))

    @property
    def g(self) -> int:
        return len(self.levels)

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.g)


@dataclass
class TestResult:
    method: str
    statistic: float
    p_value: float
    resamples: int
    null_statistics: Optional[np.ndarray] = field(default=None, repr=False)
    details: dict = field(default_factory=dict)


def _group_means(X, labels, g):
    onehot = np.zeros((g, X.shape[0]))
    onehot[labels, np.arange(X.shape[0])] = 1.0
    sizes = onehot.sum(axis=1)
    return (onehot @ X) / sizes[:, None], sizes


def _ss(X, labels, g):
    means, sizes = _group_means(X, labels, g)
    grand = X.mean(axis=0)
    ssr = np.sum(sizes[:, None] * (means - grand) ** 2, axis=0)
    sse = np.sum((X - means[labels]) ** 2, axis=0)
    return ssr, sse


def pointwise_ss(grouped: GroupedSample):
    """Pointwise between-group ``SSR(t)`` and within-group ``SSE(t)``."""
    if np.any(grouped.sizes == 0):
        raise InputError("every group must contain at least one curve")
    return _ss(grouped.sample.values, grouped.labels, grouped.g)


def _check(grouped: GroupedSample):
    n, g = grouped.sample.n, grouped.g
    if n <= g:
        raise InsufficientSampleError(f"the tests need more curves ({n}) than groups ({g})")
    pointwise_ss(grouped)
    return grouped.sample.values, grouped.labels, grouped.g, grouped.sample.grid


def _add_one_pvalue(observed, null):
    null = np.asarray(null)
    # relative slack so ties up to rounding (e.g. identity permutations) count as exceedances
    scale = max(abs(observed), float(np.max(np.abs(null), initial=0.0)))
    tol = 1e-12 * max(scale, 1e-300)
    return (1 + int(np.sum(null >= observed - tol))) / (1 + null.size)


def _streams(seed: int, count: int):
    return np.random.SeedSequence(seed).spawn(count)


def _run_resamples(fn: Callable, seed: int, count: int, threads: Optional[int]):
    seqs = _streams(seed, count)

    def one(ss):
        return fn(np.random.default_rng(ss))

    if threads is None or threads <= 1:
        return np.array([one(s) for s in seqs])
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return np.array(list(ex.map(one, seqs, chunksize=max(1, count // (4 * threads)))))


def _permutation_test(method, stat_fn, X, labels, permutations, seed, threads, keep):
    if permutations < 99:
        raise InputError("use at least 99 permutations")
    observed = stat_fn(X, labels)

    def draw(rng):
        return stat_fn(X, rng.permutation(labels))

    null = _run_resamples(draw, seed, permutations, threads)
    return TestResult(method, float(observed), _add_one_pvalue(observed, null), permutations,
                      null if keep else None)


def ratio_statistic(X, labels, g, grid):
    ssr, sse = _ss(X, labels, g)
    n = X.shape[0]
    den = inner_product(sse, np.ones_like(sse), grid) / (n - g)
    if den <= 0:
        raise DegenerateError("integrated within-group sum of squares is zero")
    return float(inner_product(ssr, np.ones_like(ssr), grid) / (g - 1) / den)


def pointwise_f(X, labels, g, grid):
    ssr, sse = _ss(X, labels, g)
    n = X.shape[0]
    zero = sse <= 0
    if np.any(zero):
        t0 = grid.points[np.flatnonzero(zero)[0]]
        raise DegenerateError(f"within-group sum of squares vanishes at t={t0:.6g}")
    return (ssr / (g - 1)) / (sse / (n - g))


def test_ratio(grouped: GroupedSample, permutations: int = DEFAULT_RESAMPLES, seed: int = 0,
               threads: Optional[int] = None, keep_null: bool = False) -> TestResult:
    """Permutation test on the ratio of integrated between/within sums of squares."""
    X, labels, g, grid = _check(grouped)
    return _permutation_test("ratio", lambda x, l: ratio_statistic(x, l, g, grid), X, labels,
                             permutations, seed, threads, keep_null)


def test_global_f(grouped: GroupedSample, permutations: int = DEFAULT_RESAMPLES, seed: int = 0,
                  threads: Optional[int] = None, keep_null: bool = False) -> TestResult:
    """Permutation test on the integrated pointwise F statistic."""
    X, labels, g, grid = _check(grouped)

    def stat(x, l):
        F = pointwise_f(x, l, g, grid)
        return float(inner_product(F, np.ones_like(F), grid))

    return _permutation_test("globalF", stat, X, labels, permutations, seed, threads, keep_null)


def test_sup_f(grouped: GroupedSample, permutations: int = DEFAULT_RESAMPLES, seed: int = 0,
               threads: Optional[int] = None, keep_null: bool = False) -> TestResult:
    """Permutation test on the maximum of the pointwise F statistic."""
    X, labels, g, grid = _check(grouped)
    return _permutation_test("supF", lambda x, l: float(np.max(pointwise_f(x, l, g, grid))),
                             X, labels, permutations, seed, threads, keep_null)


def l2_means_statistic(X, labels, g, grid):
    means, _ = _group_means(X, labels, g)
    total = 0.0
    for j in range(g):
        for l in range(j + 1, g):
            d = means[j] - means[l]
            total += float(inner_product(d, d, grid))
    return total


def _pooled_factor(X, labels, g, pve=0.99):
    means, _ = _group_means(X, labels, g)
    R = X - means[labels]
    n = X.shape[0]
    C = R.T @ R / (n - g)
    if not np.all(np.isfinite(C)):
        raise DegenerateError("pooled covariance is not finite")
    evals, evecs = np.linalg.eigh((C + C.T) / 2)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order]
    total = evals.sum()
    if total <= 0:
        return np.zeros((0, X.shape[1]))
    M = int(np.argmax(np.cumsum(evals) / total >= pve - 1e-12) + 1)
    return np.sqrt(evals[:M])[:, None] * evecs[:, :M].T  # M x V


def test_l2_means(grouped: GroupedSample, bootstraps: int = DEFAULT_RESAMPLES, seed: int = 0,
                  threads: Optional[int] = None, keep_null: bool = False) -> TestResult:
    """Sum of pairwise L2 distances between group means, parametric bootstrap null.

    Null samples are mean-zero Gaussian curves with the pooled within-group
    covariance (eigen-truncated at 99% explained variance), drawn in groups of
    the observed sizes.
    """
    if bootstraps < 99:
        raise InputError("use at least 99 bootstrap samples")
    X, labels, g, grid = _check(grouped)
    observed = l2_means_statistic(X, labels, g, grid)
    F = _pooled_factor(X, labels, g)
    n = X.shape[0]

    def draw(rng):
        Z = rng.standard_normal((n, F.shape[0]))
        return l2_means_statistic(Z @ F, labels, g, grid)

    null = _run_resamples(draw, seed, bootstraps, threads)
    return TestResult("l2means", observed, _add_one_pvalue(observed, null), bootstraps,
                      null if keep_null else None)


def oneway_f_pvalue(values, labels, g) -> float:
    """Classical one-way ANOVA p-value; 1 when there is no between-group spread."""
    values = np.asarray(values, dtype=float)
    n = values.size
    sizes = np.bincount(labels, minlength=g)
    means = np.bincount(labels, weights=values, minlength=g) / sizes
    grand = values.mean()
    ssr = float(np.sum(sizes * (means - grand) ** 2))
    sse = float(np.sum((values - means[labels]) ** 2))
    scale = max(float(np.sum((values - grand) ** 2)), np.max(np.abs(values)) ** 2 * n, 1e-300)
    if ssr <= 1e-14 * scale:
        return 1.0
    if sse <= 1e-14 * scale:
        return 0.0
    F = (ssr / (g - 1)) / (sse / (n - g))
    return float(stats.f.sf(F, g - 1, n - g))


def random_walk(rng, V: int) -> np.ndarray:
    return np.cumsum(rng.standard_normal(V)) / np.sqrt(V)


def test_random_projections(grouped: GroupedSample, k: int = DEFAULT_PROJECTIONS, seed: int = 0,
                            threads: Optional[int] = None, adjust: str = "by") -> TestResult:
    """Random-projection test with false-discovery-rate adjustment.

    Each of ``k`` Gaussian random walks ``v_r`` projects the curves to
    ``P_ij = <X_ij, v_r>``; a one-way F test on the projections gives ``p_r``.
    The reported p-value is the smallest adjusted ``p_r``; ``adjust`` is
    ``"by"`` (Benjamini-Yekutieli, valid under any dependence) or ``"bh"``
    (Benjamini-Hochberg).
    """
    if k < 1:
        raise InputError("need at least one projection")
    if adjust not in ("by", "bh"):
        raise InputError("adjust must be 'by' or 'bh'")
    X, labels, g, grid = _check(grouped)
    V = len(grid)

    def one(rng):
        v = random_walk(rng, V)
        return oneway_f_pvalue(inner_product(X, v, grid), labels, g)

    raw = _run_resamples(one, seed, k, threads)
    adjusted = stats.false_discovery_control(raw, method=adjust)
    return TestResult("projections", float(np.min(raw)), float(np.min(adjusted)), k, None,
                      {"raw_p_values": raw.tolist(), "adjusted_p_values": adjusted.tolist()})


def run_test(method: str, grouped: GroupedSample, resamples: int = DEFAULT_RESAMPLES,
             seed: int = 0, threads: Optional[int] = None, projections: int = DEFAULT_PROJECTIONS
             ) -> TestResult:
    if method == "ratio":
        return test_ratio(grouped, resamples, seed, threads)
    if method == "globalF":
        return test_global_f(grouped, resamples, seed, threads)
    if method == "supF":
        return test_sup_f(grouped, resamples, seed, threads)
    if method == "l2means":
        return test_l2_means(grouped, resamples, seed, threads)
    if method == "projections":
        return test_random_projections(grouped, projections, seed, threads)
    raise InputError(f"unknown FANOVA method {method!r}; choose from {', '.join(METHODS)}")
