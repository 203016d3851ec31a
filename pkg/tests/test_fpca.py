import numpy as np
import pytest

from fdakit.exceptions import DegenerateError, InputError
from fdakit.fdcore import FunctionalSample, Grid, SparseFunctionalSample, inner_product, l2_norm
from fdakit.fpca import (CovarianceSurface, choose_truncation, eigendecompose, estimate_covariance,
                         estimate_mean_dense, estimate_mean_sparse, fit_fpca, fit_fpca_sparse, reconstruct,
                         scores_conditional, scores_integration)

from conftest import kl_sample, sparse_kl_sample


def brownian_surface(V=201):
    g = Grid.linspace(0, 1, V)
    t = g.points
    return CovarianceSurface(g, np.minimum.outer(t, t), 0.0)


class TestMean:
    def test_identical_curves(self, unit_grid):
        x = np.sin(unit_grid.points)
        np.testing.assert_allclose(estimate_mean_dense(FunctionalSample(unit_grid, np.tile(x, (3, 1)))), x, rtol=1e-15)

    def test_antisymmetric_pair(self, unit_grid):
        x = np.cos(4 * unit_grid.points)
        np.testing.assert_allclose(estimate_mean_dense(FunctionalSample(unit_grid, np.vstack([x, -x]))), 0)

    def test_gp_mean(self, unit_grid, rng):
        t = unit_grid.points
        C = np.exp(-((t[:, None] - t[None, :]) ** 2) / (2 * 0.2**2))
        L = np.linalg.cholesky(C + 1e-8 * np.eye(t.size))
        X = np.sin(2 * np.pi * t) + 0.5 * rng.standard_normal((200, t.size)) @ L.T
        mu = estimate_mean_dense(FunctionalSample(unit_grid, X), smooth=True)
        assert np.max(np.abs(mu - np.sin(2 * np.pi * t))) < 0.1

    def test_sparse_line(self, rng):
        times = tuple(np.sort(rng.uniform(0, 1, 5)) for _ in range(40))
        sp = SparseFunctionalSample((0, 1), times, tuple(2 * t for t in times))
        g = Grid.linspace(0, 1, 21)
        mu, _ = estimate_mean_sparse(sp, g)
        np.testing.assert_allclose(mu, 2 * g.points, atol=1e-6)

    def test_sparse_simulation(self, rng):
        sp, _ = sparse_kl_sample(rng, 300, n_points=5)
        g = Grid.linspace(0, 1, 51)
        mu, _ = estimate_mean_sparse(sp, g)
        assert np.max(np.abs(mu - (1 + g.points))) < 0.15


class TestCovariance:
    def test_rank_one(self, unit_grid, rng):
        phi = np.sqrt(2) * np.sin(np.pi * unit_grid.points)
        xi = rng.normal(0, 2, 100)
        cov = estimate_covariance(FunctionalSample(unit_grid, np.outer(xi, phi)), np.zeros(len(unit_grid)))
        ev, ef = eigendecompose(cov)
        assert ev[0] == pytest.approx(np.mean(xi**2), rel=0.02)
        assert ev[1] < 1e-2 * ev[0]
        assert abs(inner_product(ef[0], phi, unit_grid)) == pytest.approx(1, abs=1e-3)

    def test_noise_variance(self, unit_grid, rng):
        s, _, _ = kl_sample(rng, 200, unit_grid, noise=0.3)
        cov = estimate_covariance(s, s.values.mean(axis=0))
        assert 0.06 <= cov.noise_variance <= 0.12

    def test_constant_curve(self, unit_grid):
        s = FunctionalSample(unit_grid, np.full((5, len(unit_grid)), 2.0))
        cov = estimate_covariance(s, estimate_mean_dense(s))
        assert np.max(np.abs(cov.matrix)) < 1e-10
        assert cov.noise_variance < 1e-10

    def test_sparse_needs_grid(self, rng):
        sp, _ = sparse_kl_sample(rng, 50)
        with pytest.raises(InputError):
            estimate_covariance(sp, lambda t: 1 + t)


class TestEigendecompose:
    def test_brownian_eigenpairs(self):
        surf = brownian_surface()
        ev, ef = eigendecompose(surf)
        t = surf.grid.points
        for m in range(1, 4):
            nu = (2 / ((2 * m - 1) * np.pi)) ** 2
            phi = np.sqrt(2) * np.sin((m - 0.5) * np.pi * t)
            assert ev[m - 1] == pytest.approx(nu, rel=0.02)
            assert l2_norm(ef[m - 1] - phi, surf.grid) / l2_norm(phi, surf.grid) < 0.02

    def test_orthonormal_and_sorted(self, unit_grid, rng):
        X = rng.normal(size=(30, len(unit_grid))).cumsum(axis=1)
        ev, ef = eigendecompose(CovarianceSurface(unit_grid, np.cov(X.T), 0.0))
        G = (ef * unit_grid.weights) @ ef.T
        np.testing.assert_allclose(G, np.eye(len(unit_grid)), atol=1e-6)
        assert np.all(np.diff(ev) <= 0) and np.all(ev >= 0)

    def test_sign_convention(self):
        _, ef = eigendecompose(brownian_surface(51))
        g = Grid.linspace(0, 1, 51)
        assert all(inner_product(phi, np.ones(51), g) > 0 for phi in ef[:3])

    def test_rank_one_surface(self, unit_grid):
        phi = np.sqrt(2) * np.cos(np.pi * unit_grid.points)
        ev, ef = eigendecompose(CovarianceSurface(unit_grid, 3.0 * np.outer(phi, phi), 0.0))
        assert ev[0] == pytest.approx(3.0 * l2_norm(phi, unit_grid) ** 2, rel=1e-10)
        assert ev[1] < 1e-10

    def test_asymmetric(self, unit_grid):
        C = np.triu(np.ones((len(unit_grid), len(unit_grid))))
        with pytest.raises(InputError):
            eigendecompose(CovarianceSurface(unit_grid, C, 0.0))


class TestTruncation:
    @pytest.mark.parametrize("threshold,expected", [(0.65, 2), (0.95, 4), (0.7, 2), (0.4, 1)])
    def test_examples(self, threshold, expected):
        assert choose_truncation([4, 3, 2, 1], threshold) == expected

    def test_all_zero(self):
        with pytest.raises(DegenerateError):
            choose_truncation([0, 0], 0.9)

    @pytest.mark.parametrize("threshold", [0.0, 1.0])
    def test_threshold_range(self, threshold):
        with pytest.raises(InputError):
            choose_truncation([1, 1], threshold)


class TestScores:
    def test_known_scores(self, unit_grid, rng):
        s, _, _ = kl_sample(rng, 40, unit_grid)
        model = fit_fpca(s, n_components=2)
        X = model.mean + 2 * model.eigenfunctions[0]
        xi = scores_integration(FunctionalSample(unit_grid, np.vstack([X, model.mean])), model)
        np.testing.assert_allclose(xi, [[2, 0], [0, 0]], atol=1e-6)

    def test_matches_fine_quadrature(self, rng):
        coarse = Grid.linspace(0, 1, 101)
        fine = Grid.linspace(0, 1, 2001)
        # model and curve are piecewise linear on the coarse grid, so the fine rule is exact for them
        s, _, _ = kl_sample(rng, 30, coarse)
        model = fit_fpca(s, n_components=2)
        x = s.values[0]
        xi = scores_integration(s.subset([0]), model)[0]
        for m in range(2):
            d = np.interp(fine.points, coarse.points, x - model.mean)
            phi = np.interp(fine.points, coarse.points, model.eigenfunctions[m])
            # the product of two linear pieces is quadratic, hence only approximately trapezoid-exact
            assert xi[m] == pytest.approx(inner_product(d, phi, fine), abs=1e-3)

    def test_conditional_dense_limit(self, unit_grid, rng):
        s, _, _ = kl_sample(rng, 50, unit_grid)
        model = fit_fpca(s, n_components=2, smooth_covariance=False)
        sp = SparseFunctionalSample.from_dense(s.subset(list(range(5))))
        blup, flags = scores_conditional(sp, model, noise_variance=1e-4, return_flags=True)
        assert not flags.any()
        # with vanishing noise the BLUP is a least-squares projection, close to the quadrature scores
        np.testing.assert_allclose(blup, model.scores[:5], atol=1e-3)

    def test_conditional_shrinks(self, unit_grid, rng):
        s, _, _ = kl_sample(rng, 30, unit_grid)
        model = fit_fpca(s, n_components=2)
        sp = SparseFunctionalSample.from_dense(s.subset([0, 1]))
        prev = np.inf
        for s2 in (0.01, 1.0, 100.0, 1e8):
            size = np.abs(scores_conditional(sp, model, noise_variance=s2)).max()
            assert size <= prev
            prev = size
        assert prev < 1e-4

    def test_sparse_score_correlation(self, rng):
        sp, xi = sparse_kl_sample(rng, 300)
        model = fit_fpca_sparse(sp, n_components=2)
        assert abs(np.corrcoef(model.scores[:, 0], xi[:, 0])[0, 1]) > 0.9


class TestReconstruct:
    def test_zero_components_gives_mean(self, unit_grid, rng):
        s, _, _ = kl_sample(rng, 20, unit_grid)
        model = fit_fpca(s, n_components=2)
        np.testing.assert_array_equal(reconstruct(model, 3, 0), model.mean)

    def test_full_reconstruction_noiseless(self, unit_grid, rng):
        s, _, _ = kl_sample(rng, 20, unit_grid)
        model = fit_fpca(s, n_components=2, smooth_covariance=False)
        for i in range(s.n):
            assert np.mean((reconstruct(model, i) - s.values[i]) ** 2) < 1e-6

    def test_error_nonincreasing(self, unit_grid, rng):
        X = rng.normal(size=(25, len(unit_grid))).cumsum(axis=1) / 10
        s = FunctionalSample(unit_grid, X)
        model = fit_fpca(s, n_components=8, smooth_covariance=False)
        errs = [np.mean([(reconstruct(model, i, M) - X[i]) ** 2 for i in range(25)]) for M in range(9)]
        assert np.all(np.diff(errs) <= 1e-12)

    def test_out_of_range(self, unit_grid, rng):
        s, _, _ = kl_sample(rng, 10, unit_grid)
        model = fit_fpca(s, n_components=2)
        with pytest.raises(InputError):
            reconstruct(model, 0, 3)


class TestFitFpca:
    def test_pve_threshold(self, unit_grid, rng):
        s, _, _ = kl_sample(rng, 100, unit_grid, sds=(1.0, 0.5))
        model = fit_fpca(s, pve=0.95, smooth_covariance=False)
        assert model.n_components == 2
        assert model.pve[-1] == pytest.approx(1.0)

    def test_truncate(self, unit_grid, rng):
        s, _, _ = kl_sample(rng, 40, unit_grid)
        model = fit_fpca(s, n_components=3)
        small = model.truncate(1)
        assert small.n_components == 1 and small.scores.shape == (40, 1)
        with pytest.raises(InputError):
            model.truncate(4)
