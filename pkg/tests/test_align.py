import numpy as np
import pytest

from fdakit.align import (align_to_mean, compose, elastic_distance, invert_warp, l2_warp, optimal_warp, srvf,
                          srvf_to_curve)
from fdakit.exceptions import DimensionError, InputError, InsufficientSampleError
from fdakit.fdcore import FunctionalSample, Grid, l2_norm


def gamma0(t):
    return t + 0.1 * np.sin(2 * np.pi * t) * t * (1 - t) * 4


def shifted_peaks(grid, n=8, seed=1):
    r = np.random.default_rng(seed)
    t = grid.points
    shifts = r.uniform(-0.08, 0.08, n)
    amps = r.uniform(0.8, 1.2, n)
    return np.array([a * np.exp(-((t - 0.5 - s) ** 2) / 0.005) for a, s in zip(amps, shifts)])


class TestSrvf:
    def test_identity_line(self, unit_grid):
        np.testing.assert_allclose(srvf(unit_grid.points, unit_grid).q, 1.0, atol=1e-12)

    def test_constant(self, unit_grid):
        np.testing.assert_array_equal(srvf(np.full(len(unit_grid), 3.0), unit_grid).q, 0.0)

    def test_square(self, unit_grid):
        t = unit_grid.points
        q = srvf(t**2, unit_grid).q
        np.testing.assert_allclose(q[1:-1], np.sqrt(2 * t[1:-1]), atol=2e-2)

    def test_inverse_roundtrip(self, unit_grid):
        x = np.sin(3 * unit_grid.points) + 2
        back = srvf_to_curve(srvf(x, unit_grid).q, unit_grid, start=x[0])
        np.testing.assert_allclose(back, x, atol=2e-3)

    def test_needs_three_points(self):
        g = Grid([0.0, 1.0])
        with pytest.raises(InputError):
            srvf([0.0, 1.0], g)

    def test_length_mismatch(self, unit_grid):
        with pytest.raises(DimensionError):
            srvf(np.zeros(5), unit_grid)


class TestOptimalWarp:
    def test_identical(self, unit_grid):
        q = srvf(np.sin(2 * np.pi * unit_grid.points), unit_grid)
        gamma, cost = optimal_warp(q, q)
        np.testing.assert_allclose(gamma.gamma, unit_grid.points, atol=1e-12)
        assert cost == pytest.approx(0.0, abs=1e-12)

    def test_recovers_known_warp(self, unit_grid):
        t = unit_grid.points
        x1 = np.sin(2 * np.pi * t) + 0.5 * t
        g0 = gamma0(t)
        x2 = compose(x1, g0, unit_grid)
        # warping x1 by the recovered gamma should reproduce x2
        gamma, _ = optimal_warp(srvf(x1, unit_grid), srvf(x2, unit_grid))
        assert np.max(np.abs(gamma.gamma - g0)) < 0.03

    def test_warp_invariants(self, unit_grid, rng):
        t = unit_grid.points
        q1 = srvf(np.cumsum(rng.normal(size=t.size)) / 10, unit_grid)
        q2 = srvf(np.sin(5 * t), unit_grid)
        gamma, cost = optimal_warp(q1, q2)
        assert gamma.gamma[0] == t[0] and gamma.gamma[-1] == t[-1]
        assert np.all(np.diff(gamma.gamma) > 0)
        assert cost >= 0

    def test_aligned_cost_bounded_by_unaligned(self, unit_grid):
        t = unit_grid.points
        x1 = np.where(t < 0.4, 0.0, 1.0) * t
        x2 = np.where(t < 0.6, t, 0.2)
        q1, q2 = srvf(x1, unit_grid), srvf(x2, unit_grid)
        _, cost = optimal_warp(q1, q2)
        assert 0 < cost <= l2_norm(q1.q - q2.q, unit_grid) ** 2 + 1e-12

    def test_l2_warp_not_worse_than_identity(self, unit_grid):
        t = unit_grid.points
        x1, x2 = np.sin(2 * np.pi * t), np.sin(2 * np.pi * gamma0(t))
        _, cost = l2_warp(x1, x2, unit_grid)
        assert cost <= l2_norm(x1 - x2, unit_grid) ** 2 + 1e-12

    def test_grid_mismatch(self, unit_grid):
        other = Grid.linspace(0, 1, 51)
        with pytest.raises(InputError):
            optimal_warp(srvf(unit_grid.points, unit_grid), srvf(other.points, other))


class TestElasticDistance:
    def test_self_distance(self, unit_grid):
        x = np.cos(3 * unit_grid.points)
        assert elastic_distance(x, x, unit_grid) == 0.0

    def test_level_invariance(self, unit_grid):
        x = np.cos(3 * unit_grid.points)
        assert elastic_distance(x, x + 5, unit_grid) == pytest.approx(0.0, abs=1e-6)

    def test_near_warp_invariance(self, unit_grid):
        t = unit_grid.points
        x = np.sin(2 * np.pi * t)
        d = elastic_distance(x, compose(x, gamma0(t), unit_grid), unit_grid)
        assert d < 0.05 * l2_norm(srvf(x, unit_grid).q, unit_grid)

    def test_symmetric(self, unit_grid, rng):
        x, y = np.cumsum(rng.normal(size=(2, len(unit_grid))), axis=1) / 10
        assert elastic_distance(x, y, unit_grid) == pytest.approx(elastic_distance(y, x, unit_grid))


class TestWarpAlgebra:
    def test_invert(self, unit_grid):
        g = gamma0(unit_grid.points)
        back = np.interp(invert_warp(g, unit_grid), unit_grid.points, g)
        np.testing.assert_allclose(back, unit_grid.points, atol=1e-3)


class TestAlignToMean:
    def test_identical_curves(self, unit_grid):
        x = np.sin(2 * np.pi * unit_grid.points)
        res = align_to_mean(FunctionalSample(unit_grid, np.tile(x, (4, 1))))
        for w in res.warps:
            np.testing.assert_allclose(w.gamma, unit_grid.points, atol=1e-12)
        np.testing.assert_allclose(res.mean, x, atol=2e-3)
        assert res.converged

    def test_pair_of_warped_curves(self, unit_grid):
        t = unit_grid.points
        x1 = np.sin(2 * np.pi * t)
        x2 = compose(x1, gamma0(t), unit_grid)
        res = align_to_mean(FunctionalSample(unit_grid, np.vstack([x1, x2])))
        a = res.aligned.values
        assert np.max(np.abs(a[0] - a[1])) < 0.05 * np.ptp(x1)

    def test_costs_nonincreasing_and_warps_valid(self, unit_grid):
        res = align_to_mean(FunctionalSample(unit_grid, shifted_peaks(unit_grid)))
        assert np.all(np.diff(res.costs) <= 1e-8)
        for w in res.warps:
            assert w.gamma[0] == 0.0 and w.gamma[-1] == 1.0
            assert np.all(np.diff(w.gamma) >= 0)
        # centered: the pointwise mean warp is close to the identity
        np.testing.assert_allclose(np.mean([w.gamma for w in res.warps], axis=0), unit_grid.points, atol=0.02)

    def test_sharpens_peak(self, unit_grid):
        X = shifted_peaks(unit_grid, n=12, seed=4)
        res = align_to_mean(FunctionalSample(unit_grid, X))
        v = int(np.argmax(res.mean))
        assert res.aligned.values[:, v].var() <= X[:, v].var()
        assert res.aligned.values.mean(axis=0).max() > X.mean(axis=0).max()

    def test_threads_do_not_change_result(self, unit_grid):
        s = FunctionalSample(unit_grid, shifted_peaks(unit_grid, n=5))
        a, b = align_to_mean(s, threads=1), align_to_mean(s, threads=3)
        np.testing.assert_array_equal(a.aligned.values, b.aligned.values)

    def test_nonconvergence_warns(self, unit_grid):
        s = FunctionalSample(unit_grid, shifted_peaks(unit_grid, n=6))
        with pytest.warns(RuntimeWarning):
            res = align_to_mean(s, max_iter=1, tol=0.0)
        assert not res.converged

    def test_single_curve(self, unit_grid):
        with pytest.raises(InsufficientSampleError):
            align_to_mean(FunctionalSample(unit_grid, np.zeros((1, len(unit_grid)))))
