"""Functional principal component analysis for dense and sparse samples.

Dense samples use the empirical covariance off the diagonal; the diagonal is
replaced by a tensor-product P-spline smooth of the off-diagonal products so
white measurement noise can be separated out. Sparse samples pool all
within-curve cross-products and smooth them onto an output grid. Scores come
from numerical integration (dense) or best linear unbiased prediction
(sparse).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from . import _penalized
from .basis import (
    BasisSystem,
    difference_penalty,
    eval_basis,
    gcv_select_lambda,
    make_bspline_basis,
    smooth_curve,
)
from .exceptions import DegenerateError, DimensionError, InputError, InsufficientSampleError
from .fdcore import FunctionalSample, Grid, SparseFunctionalSample, inner_product

SURFACE_BASIS_K = 10
NOISE_TRIM = 0.1  # fraction of the domain dropped at each end for the noise estimate


@dataclass(frozen=True)
class CovarianceSurface:
    grid: Grid
    matrix: np.ndarray
    noise_variance: float
    lam: float = float("nan")


@dataclass
class FpcaModel:
    grid: Grid
    mean: np.ndarray
    eigenvalues: np.ndarray  # retained, length M
    eigenfunctions: np.ndarray  # M x V, L2-orthonormal
    noise_variance: float
    all_eigenvalues: np.ndarray
    scores: Optional[np.ndarray] = None  # n x M
    covariance: Optional[CovarianceSurface] = field(default=None, repr=False)

    @property
    def n_components(self) -> int:
        return self.eigenvalues.size

    @property
    def pve(self) -> np.ndarray:
        """Cumulative proportion of variance explained, over all components."""
        return np.cumsum(self.all_eigenvalues) / np.sum(self.all_eigenvalues)

    def truncate(self, M: int) -> "FpcaModel":
        if not 0 <= M <= self.all_eigenvalues.size:
            raise InputError(f"cannot keep {M} components")
        if M > self.n_components:
            raise InputError(f"model only retains {self.n_components} eigenfunctions")
        return FpcaModel(
            self.grid,
            self.mean,
            self.eigenvalues[:M],
            self.eigenfunctions[:M],
            self.noise_variance,
            self.all_eigenvalues,
            None if self.scores is None else self.scores[:, :M],
            self.covariance,
        )


# -- mean --------------------------------------------------------------------


def estimate_mean_dense(
    sample: FunctionalSample, smooth: bool = False, basis: Optional[BasisSystem] = None,
    lam: Optional[float] = None,
) -> np.ndarray:
    """Pointwise mean; optionally P-spline smoothed (GCV when ``lam`` is None)."""
    mu = sample.values.mean(axis=0)
    if not smooth:
        return mu
    t = sample.grid.points
    if basis is None:
        basis = make_bspline_basis(sample.grid.domain, min(20, len(t) - 2), 4)
    if lam is None:
        lam, _ = gcv_select_lambda(t, mu, basis)
    return smooth_curve(t, mu, basis, lam)(t)


def estimate_mean_sparse(
    sparse: SparseFunctionalSample,
    grid: Grid,
    basis: Optional[BasisSystem] = None,
    lam: Optional[float] = None,
):
    """Smooth the pooled ``(t_il, x_il)`` cloud; returns ``(mean_on_grid, fit)``."""
    sparse.check_coverage()
    t, x = sparse.pooled()
    if basis is None:
        basis = make_bspline_basis(sparse.domain, 10, 4)
    if lam is None:
        lam, _ = gcv_select_lambda(t, x, basis)
    fit = smooth_curve(t, x, basis, lam)
    return fit(grid.points), fit


# -- bivariate smoothing -----------------------------------------------------


@dataclass
class SurfaceSmooth:
    basis: BasisSystem
    coef: np.ndarray  # K x K
    lam: float

    def __call__(self, s, t) -> np.ndarray:
        """Values at the paired points ``(s_j, t_j)``."""
        Bs = eval_basis(self.basis, s)
        Bt = eval_basis(self.basis, t)
        return np.einsum("jk,kl,jl->j", Bs, self.coef, Bt)

    def on_grid(self, points) -> np.ndarray:
        B = eval_basis(self.basis, points)
        return B @ self.coef @ B.T


def smooth_surface(s, t, z, basis: BasisSystem, lambda_grid=None, lam=None) -> SurfaceSmooth:
    """Tensor-product P-spline fit of scattered ``z(s, t)``, lambda by GCV."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    z = np.asarray(z, dtype=float)
    K = basis.n_basis
    if z.size < K * K:
        raise InsufficientSampleError(
            f"surface smoothing needs at least {K * K} off-diagonal products, got {z.size}"
        )
    Bs = eval_basis(basis, s)
    Bt = eval_basis(basis, t)
    B = (Bs[:, :, None] * Bt[:, None, :]).reshape(z.size, K * K)
    BtB = B.T @ B
    Btz = B.T @ z
    zz = float(z @ z)
    Om = difference_penalty(K, 2, basis).matrix
    I = np.eye(K)
    P = np.kron(Om, I) + np.kron(I, Om)

    def fit(lmb):
        A = BtB + lmb * P
        try:
            c = np.linalg.solve(A, Btz)
            edf = float(np.trace(np.linalg.solve(A, BtB)))
        except np.linalg.LinAlgError:
            Ainv = np.linalg.pinv(A)
            c = Ainv @ Btz
            edf = float(np.trace(Ainv @ BtB))
        rss = max(zz - 2 * c @ Btz + c @ BtB @ c, 0.0)
        return c, rss, edf

    if lam is None:
        grid = _penalized.default_lambda_grid() if lambda_grid is None else np.asarray(lambda_grid)
        scores = []
        for lmb in grid:
            _, rss, edf = fit(lmb)
            scores.append(_penalized.gcv_score(rss, edf, z.size))
        if not np.any(np.isfinite(scores)):
            raise DegenerateError("bivariate GCV undefined for every lambda")
        lam = float(grid[_penalized.argmin_prefer_larger(grid, scores)])
    c, _, _ = fit(lam)
    return SurfaceSmooth(basis, c.reshape(K, K), float(lam))


def _psd_trim(C):
    C = (C + C.T) / 2
    evals, evecs = np.linalg.eigh(C)
    evals = np.clip(evals, 0.0, None)
    C = (evecs * evals) @ evecs.T
    return (C + C.T) / 2


def _central(points, domain):
    a, b = domain
    lo, hi = a + NOISE_TRIM * (b - a), b - NOISE_TRIM * (b - a)
    return (points >= lo) & (points <= hi)


def _mean_at(mean, grid, points):
    if callable(mean):
        return np.asarray(mean(points), dtype=float)
    return np.interp(points, grid.points, np.asarray(mean, dtype=float))


def estimate_covariance(
    sample: Union[FunctionalSample, SparseFunctionalSample],
    mean,
    grid: Optional[Grid] = None,
    basis_k: int = SURFACE_BASIS_K,
    lambda_grid=None,
) -> CovarianceSurface:
    """Covariance surface with a smoothed diagonal and a noise-variance estimate.

    Parameters
    ----------
    sample : FunctionalSample or SparseFunctionalSample
    mean : array on the output grid, or a callable evaluating the mean
    grid : output grid; required for sparse samples
    """
    if isinstance(sample, FunctionalSample):
        return _covariance_dense(sample, np.asarray(mean, dtype=float), basis_k, lambda_grid)
    if grid is None:
        raise InputError("a sparse covariance estimate needs an output grid")
    return _covariance_sparse(sample, mean, grid, basis_k, lambda_grid)


def _covariance_dense(sample, mean, basis_k, lambda_grid):
    grid = sample.grid
    V = len(grid)
    if mean.shape != (V,):
        raise DimensionError("mean must be given on the sample grid")
    Xc = sample.values - mean
    raw = Xc.T @ Xc / sample.n
    u, v = np.nonzero(~np.eye(V, dtype=bool))
    basis = make_bspline_basis(grid.domain, basis_k, 4)
    sm = smooth_surface(grid.points[u], grid.points[v], raw[u, v], basis, lambda_grid)
    smooth_diag = sm(grid.points, grid.points)
    C = raw.copy()
    C[np.diag_indices(V)] = smooth_diag
    central = _central(grid.points, grid.domain)
    noise = max(0.0, float(np.mean(np.diag(raw)[central] - smooth_diag[central])))
    C = _psd_trim(C)
    C.setflags(write=False)
    return CovarianceSurface(grid, C, noise, sm.lam)


def _covariance_sparse(sparse, mean, grid, basis_k, lambda_grid):
    ss, tt, zz = [], [], []
    dt, dz = [], []
    for t, x in zip(sparse.times, sparse.values):
        r = x - _mean_at(mean, grid, t)
        prod = np.outer(r, r)
        j, k = np.nonzero(~np.eye(t.size, dtype=bool))
        ss.append(t[j])
        tt.append(t[k])
        zz.append(prod[j, k])
        dt.append(t)
        dz.append(r**2)
    ss, tt, zz = np.concatenate(ss), np.concatenate(tt), np.concatenate(zz)
    basis = make_bspline_basis(sparse.domain, basis_k, 4)
    sm = smooth_surface(ss, tt, zz, basis, lambda_grid)
    C = sm.on_grid(grid.points)
    C = (C + C.T) / 2
    dt, dz = np.concatenate(dt), np.concatenate(dz)
    central = _central(dt, sparse.domain)
    if not np.any(central):
        noise = 0.0
    else:
        noise = max(0.0, float(np.mean(dz[central] - sm(dt[central], dt[central]))))
    C = _psd_trim(C)
    C.setflags(write=False)
    return CovarianceSurface(grid, C, noise, sm.lam)


# -- eigen analysis ------------------------------------------------------------


def _fix_sign(phi, grid):
    integral = float(inner_product(phi, np.ones_like(phi), grid))
    scale = np.max(np.abs(phi)) if phi.size else 0.0
    if abs(integral) > 1e-8 * max(scale, 1e-300) * (grid.domain[1] - grid.domain[0]):
        return phi if integral > 0 else -phi
    nz = np.flatnonzero(np.abs(phi) > 1e-10 * max(scale, 1e-300))
    if nz.size and phi[nz[0]] < 0:
        return -phi
    return phi


def eigendecompose(surface: CovarianceSurface, tol: float = 1e-10):
    """Eigenpairs of the covariance operator under the grid's L2 inner product.

    Returns ``(eigenvalues, eigenfunctions)`` with eigenvalues nonincreasing
    and clipped at zero, eigenfunctions as rows scaled so that
    ``<phi_m, phi_k> = delta_mk``, each signed so that its integral is
    positive (first clearly nonzero value positive when the integral vanishes).
    """
    C = np.asarray(surface.matrix, dtype=float)
    grid = surface.grid
    if C.shape != (len(grid), len(grid)):
        raise DimensionError("covariance matrix does not match its grid")
    scale = max(np.max(np.abs(C)), 1e-300)
    if np.max(np.abs(C - C.T)) > tol * scale:
        raise InputError("covariance surface is not symmetric")
    sw = np.sqrt(grid.weights)
    A = sw[:, None] * C * sw[None, :]
    evals, evecs = np.linalg.eigh((A + A.T) / 2)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    phis = (evecs[:, order] / sw[:, None]).T
    phis = np.array([_fix_sign(p, grid) for p in phis])
    return evals, phis


def choose_truncation(eigenvalues, pve_threshold: float) -> int:
    """Smallest ``M`` whose cumulative proportion of variance reaches the threshold."""
    if not 0 < pve_threshold < 1:
        raise InputError("PVE threshold must lie in (0, 1)")
    ev = np.clip(np.asarray(eigenvalues, dtype=float), 0.0, None)
    total = ev.sum()
    if total <= 0:
        raise DegenerateError("all eigenvalues are zero; nothing to explain")
    cum = np.cumsum(ev) / total
    return int(np.argmax(cum >= pve_threshold - 1e-12) + 1)


# -- scores --------------------------------------------------------------------


def scores_integration(sample: FunctionalSample, model: FpcaModel) -> np.ndarray:
    """``xi_{m,i} = <x_i - mu, phi_m>`` by trapezoid quadrature."""
    if sample.grid != model.grid:
        raise DimensionError("sample and model grids differ")
    Xc = sample.values - model.mean
    return (Xc * model.grid.weights) @ model.eigenfunctions.T


def scores_conditional(
    sparse: SparseFunctionalSample,
    model: FpcaModel,
    noise_variance: Optional[float] = None,
    return_flags: bool = False,
):
    """Best linear unbiased prediction of the scores of sparsely observed curves.

    ``xi_i = Lambda Phi_i^T (Phi_i Lambda Phi_i^T + sigma^2 I)^{-1} (x_i - mu_i)``
    with the model eigenfunctions and mean interpolated at each curve's points.
    Singular inner matrices get a 1e-10 ridge; those curves are flagged.
    """
    s2 = model.noise_variance if noise_variance is None else float(noise_variance)
    lam = model.eigenvalues
    M = lam.size
    t_grid = model.grid.points
    out = np.zeros((sparse.n, M))
    flags = np.zeros(sparse.n, dtype=bool)
    for i, (t, x) in enumerate(zip(sparse.times, sparse.values)):
        Phi = np.array([np.interp(t, t_grid, phi) for phi in model.eigenfunctions]).T
        r = x - np.interp(t, t_grid, model.mean)
        S = (Phi * lam) @ Phi.T + s2 * np.eye(t.size)
        if np.linalg.cond(S) > 1e12 or not np.all(np.isfinite(S)):
            S = S + 1e-10 * np.eye(t.size)
            flags[i] = True
        try:
            sol = np.linalg.solve(S, r)
        except np.linalg.LinAlgError:
            S = S + 1e-10 * np.eye(t.size)
            sol = np.linalg.solve(S, r)
            flags[i] = True
        out[i] = lam * (Phi.T @ sol)
    if np.any(flags):
        warnings.warn(
            f"{int(flags.sum())} curve(s) needed ridge stabilization for conditional scores",
            RuntimeWarning,
            stacklevel=2,
        )
    return (out, flags) if return_flags else out


def reconstruct(model: FpcaModel, i: int, M: Optional[int] = None, scores=None) -> np.ndarray:
    """Truncated Karhunen-Loeve expansion ``mu + sum_{m<=M} xi_mi phi_m``."""
    xi = model.scores if scores is None else np.atleast_2d(scores)
    if xi is None:
        raise InputError("model holds no scores")
    M = model.n_components if M is None else M
    if not 0 <= M <= model.n_components:
        raise InputError(f"M must lie in [0, {model.n_components}], got {M}")
    return model.mean + xi[i, :M] @ model.eigenfunctions[:M]


# -- end-to-end fits -------------------------------------------------------------


def _retain(evals, pve, n_components):
    if n_components is not None:
        if not 1 <= n_components <= evals.size:
            raise InputError(f"n_components must lie in [1, {evals.size}]")
        return n_components
    return choose_truncation(evals, pve)


def fit_fpca(
    sample: FunctionalSample,
    pve: float = 0.99,
    n_components: Optional[int] = None,
    smooth_mean: bool = False,
    smooth_covariance: bool = True,
    basis_k: int = SURFACE_BASIS_K,
) -> FpcaModel:
    """FPCA of a dense sample with integration scores.

    With ``smooth_covariance=False`` the raw empirical covariance is
    decomposed directly and no noise variance is estimated.
    """
    if sample.n < 2:
        raise InsufficientSampleError("FPCA needs at least 2 curves")
    mu = estimate_mean_dense(sample, smooth=smooth_mean)
    if smooth_covariance:
        cov = estimate_covariance(sample, mu, basis_k=basis_k)
    else:
        Xc = sample.values - mu
        cov = CovarianceSurface(sample.grid, Xc.T @ Xc / sample.n, 0.0)
    evals, phis = eigendecompose(cov)
    M = _retain(evals, pve, n_components)
    model = FpcaModel(sample.grid, mu, evals[:M], phis[:M], cov.noise_variance, evals, None, cov)
    model.scores = scores_integration(sample, model)
    return model


def fit_fpca_sparse(
    sparse: SparseFunctionalSample,
    grid: Optional[Grid] = None,
    pve: float = 0.99,
    n_components: Optional[int] = None,
    mean_basis: Optional[BasisSystem] = None,
    mean_lambda: Optional[float] = None,
    basis_k: int = SURFACE_BASIS_K,
) -> FpcaModel:
    """FPCA of a sparse sample (pooled smoothing + conditional-expectation scores)."""
    sparse.check_coverage()
    if grid is None:
        grid = Grid.linspace(*sparse.domain, 51)
    mu, mean_fit = estimate_mean_sparse(sparse, grid, mean_basis, mean_lambda)
    cov = estimate_covariance(sparse, mean_fit, grid=grid, basis_k=basis_k)
    evals, phis = eigendecompose(cov)
    M = _retain(evals, pve, n_components)
    model = FpcaModel(grid, mu, evals[:M], phis[:M], cov.noise_variance, evals, None, cov)
    model.scores = scores_conditional(sparse, model)
    return model
