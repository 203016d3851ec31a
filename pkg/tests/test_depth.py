import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fdakit.depth import depth_colors, functional_boxplot, modified_band_depth
from fdakit.exceptions import InsufficientSampleError
from fdakit.fdcore import FunctionalSample, Grid


def mbd_oracle(X):
    """Triple loop over curves, pairs and grid points."""
    n, V = X.shape
    out = np.empty(n)
    for i in range(n):
        count = 0
        for j, k in itertools.combinations(range(n), 2):
            for v in range(V):
                lo, hi = min(X[j, v], X[k, v]), max(X[j, v], X[k, v])
                count += lo <= X[i, v] <= hi
        out[i] = count / (n * (n - 1) // 2 * V)
    return out


class TestModifiedBandDepth:
    def test_middle_constant_is_deepest(self):
        X = np.array([np.zeros(5), np.ones(5), np.full(5, 0.5)])
        rep = modified_band_depth(X)
        assert rep.median == 2
        assert rep.depths[2] > rep.depths[:2].max()

    def test_identical_curves(self):
        rep = modified_band_depth(np.tile(np.sin(np.linspace(0, 3, 8)), (5, 1)))
        assert np.all(rep.depths == rep.depths[0])
        assert rep.median == 0
        np.testing.assert_array_equal(rep.ordering, np.arange(5))

    def test_five_curves_match_oracle(self, rng):
        X = rng.normal(size=(5, 10))
        np.testing.assert_array_equal(modified_band_depth(X).depths, mbd_oracle(X))

    @settings(max_examples=60, deadline=None)
    @given(st.integers(3, 6), st.integers(1, 12), st.integers(0, 2**32 - 1), st.booleans())
    def test_matches_oracle_with_ties(self, n, V, seed, discrete):
        r = np.random.default_rng(seed)
        X = r.integers(0, 3, (n, V)).astype(float) if discrete else r.normal(size=(n, V))
        np.testing.assert_array_equal(modified_band_depth(X).depths, mbd_oracle(X))

    @settings(max_examples=30)
    @given(st.floats(0.01, 100), st.floats(-100, 100), st.integers(0, 1000))
    def test_affine_invariance(self, a, b, seed):
        X = np.random.default_rng(seed).integers(-5, 5, (6, 7)).astype(float)
        np.testing.assert_array_equal(modified_band_depth(X).depths, modified_band_depth(a * X + b).depths)

    def test_accepts_sample(self, unit_grid, rng):
        s = FunctionalSample(unit_grid, rng.normal(size=(4, len(unit_grid))))
        rep = modified_band_depth(s)
        assert np.all((rep.depths >= 0) & (rep.depths <= 1))
        assert sorted(rep.ordering) == list(range(4))

    def test_too_few_curves(self):
        with pytest.raises(InsufficientSampleError):
            modified_band_depth(np.zeros((2, 5)))


class TestFunctionalBoxplot:
    def test_identical_curves(self):
        box = functional_boxplot(np.ones((6, 9)))
        assert not box.outliers.any()
        assert box.median == 0
        np.testing.assert_array_equal(box.upper - box.lower, 0)

    def test_single_far_curve_flagged(self):
        t = np.linspace(0, 1, 20)
        tight = np.arange(9)[:, None] * 0.1 / 8 + 0.0 * t
        X = np.vstack([tight, np.full((1, 20), 10.0)])
        box = functional_boxplot(X)
        # central region: offsets 2..6 -> [0.025, 0.075], fences at -0.05 and 0.15
        np.testing.assert_allclose(box.lower_fence, -0.05, atol=1e-12)
        np.testing.assert_allclose(box.upper_fence, 0.15, atol=1e-12)
        np.testing.assert_array_equal(np.flatnonzero(box.outliers), [9])

    def test_envelopes_by_hand(self):
        X = np.array([[0.0, 0.0], [1.0, 1.0], [0.4, 0.6], [0.6, 0.4], [5.0, 5.0]])
        box = functional_boxplot(X)
        # deepest three are curves 2, 3 and 1 (ties to the lower index)
        np.testing.assert_array_equal(box.central, [1, 2, 3])
        np.testing.assert_allclose(box.lower, [0.4, 0.4])
        np.testing.assert_allclose(box.upper, [1.0, 1.0])
        np.testing.assert_allclose(box.lower_fence, [0.4 - 0.9, 0.4 - 0.9])
        np.testing.assert_allclose(box.upper_fence, [1.9, 1.9])
        np.testing.assert_array_equal(box.outliers, [False, False, False, False, True])

    def test_translation_invariance(self, rng):
        X = rng.normal(size=(12, 15))
        X[3] += 6
        a, b = functional_boxplot(X), functional_boxplot(X + 3.7)
        np.testing.assert_array_equal(a.outliers, b.outliers)
        assert a.outliers[3]

    def test_shrinking_unflags(self, rng):
        X = rng.normal(size=(15, 10))
        X[0] = 8.0
        med = X[functional_boxplot(X).median].copy()
        flags = []
        for w in np.linspace(1, 0, 11):
            Y = X.copy()
            Y[0] = med + w * (X[0] - med)
            flags.append(functional_boxplot(Y).outliers[0])
        assert flags[0] and not flags[-1]
        first_clear = flags.index(False)
        assert not any(flags[first_clear:])

    def test_region_nesting(self, rng):
        box = functional_boxplot(rng.normal(size=(20, 30)))
        assert np.all(box.lower <= box.upper)
        assert np.all(box.lower_fence <= box.lower) and np.all(box.upper <= box.upper_fence)

    def test_too_few_curves(self):
        with pytest.raises(InsufficientSampleError):
            functional_boxplot(np.zeros((3, 4)))


class TestDepthColors:
    def test_three_curves(self):
        X = np.array([np.zeros(4), np.full(4, 0.5), np.ones(4)])
        c = depth_colors(X)
        assert c[1] == 1.0
        assert sorted(c) == [0.0, 0.5, 1.0]

    def test_extremes(self, rng):
        X = rng.normal(size=(7, 12))
        c = depth_colors(X)
        rep = modified_band_depth(X)
        assert c[rep.ordering[0]] == 1.0
        assert c[rep.ordering[-1]] == 0.0

    def test_too_few(self):
        with pytest.raises(InsufficientSampleError):
            depth_colors(np.zeros((1, 3)))
