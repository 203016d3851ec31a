"""Penalized functional regression.

Scalar-on-function (gaussian and logit), function-on-scalar and
function-on-function (concurrent and integral/historical) models. Every
coefficient function is a B-spline expansion with a difference penalty;
smoothing parameters are chosen by GCV over a log grid, one coordinate
(penalty block) at a time.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit
from scipy.stats import norm

from . import _penalized
from .basis import BasisSystem, difference_penalty, eval_basis, make_bspline_basis
from .exceptions import (
    DimensionError,
    InputError,
    RankDeficiencyError,
    SeparationError,
)
from .fdcore import FunctionalSample, Grid, trapezoid_weights

DEFAULT_K = 15
GCV_SWEEPS = 2
IRLS_TOL = 1e-8
IRLS_MAX_ITER = 50
SEPARATION_NORM = 1e4


# -- shared machinery ------------------------------------------------------------


@dataclass
class _Penalty:
    cols: slice
    root: np.ndarray  # rows x (cols.stop - cols.start)
    name: str


@dataclass
class _Problem:
    """Weighted design, response and a list of penalty terms with one lambda each."""

    X: np.ndarray
    y: np.ndarray
    weights: Optional[np.ndarray]
    penalties: list
    blocks: dict  # name -> column slice
    unpenalized: np.ndarray  # bool per column

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def root(self, lams) -> np.ndarray:
        rows = []
        for pen, lam in zip(self.penalties, lams):
            R = np.zeros((pen.root.shape[0], self.p))
            R[:, pen.cols] = np.sqrt(lam) * pen.root
            rows.append(R)
        return np.vstack(rows) if rows else np.zeros((0, self.p))

    def penalty_matrix(self, lams) -> np.ndarray:
        R = self.root(lams)
        return R.T @ R


def _block_of(problem: _Problem, col: int) -> str:
    for name, sl in problem.blocks.items():
        if sl.start <= col < sl.stop:
            return name
    return "?"


def _solve(problem: _Problem, lams, X=None, y=None, weights=None):
    X = problem.X if X is None else X
    y = problem.y if y is None else y
    w = problem.weights if weights is None else weights
    active = np.linalg.norm(X, axis=0) > 0
    if np.all(active):
        sol = _penalized.solve(X, y, weights=w, root=problem.root(lams))
    else:
        # columns without any data (outside an integration window) are pinned to 0
        R = problem.root(lams)[:, active]
        sub = _penalized.solve(X[:, active], y, weights=w, root=R)
        coef = np.zeros(problem.p)
        coef[active] = sub.coef
        cov = np.zeros((problem.p, problem.p))
        cov[np.ix_(active, active)] = sub.cov_unscaled
        null = np.zeros((problem.p, sub.null_space.shape[1]))
        null[active] = sub.null_space
        sol = _penalized.PenalizedSolution(coef, cov, sub.edf, sub.rss, sub.fitted, sub.rank,
                                           null)
    _check_rank(problem, sol)
    return sol


def _check_rank(problem: _Problem, sol):
    null = sol.null_space
    if null.shape[1] == 0:
        return
    unpen = problem.unpenalized
    mass = np.linalg.norm(null[unpen], axis=0) if np.any(unpen) else np.zeros(null.shape[1])
    if np.any(mass > 1e-6):
        vec = null[:, int(np.argmax(mass))]
        col = int(np.argmax(np.abs(vec) * unpen))
        raise RankDeficiencyError(
            f"penalized system is singular in the unpenalized block "
            f"'{_block_of(problem, col)}' (check for constant or collinear covariates)",
            direction=vec,
        )
    vec = null[:, 0]
    block = _block_of(problem, int(np.argmax(np.abs(vec))))
    warnings.warn(
        f"penalized system is singular within block '{block}'; "
        "returning the minimum-norm solution (identified functionals are unaffected)",
        RuntimeWarning,
        stacklevel=4,
    )


def _as_lams(lam, n):
    if lam is None:
        return None
    lams = np.atleast_1d(np.asarray(lam, dtype=float))
    if lams.size == 1:
        lams = np.repeat(lams, n)
    if lams.size != n:
        raise InputError(f"expected {n} smoothing parameters, got {lams.size}")
    if np.any(lams < 0) or not np.all(np.isfinite(lams)):
        raise InputError("smoothing parameters must be finite and nonnegative")
    return lams


def select_lambdas(score_fn, n_blocks: int, lambda_grid=None, sweeps: int = GCV_SWEEPS):
    """Coordinate descent over penalty blocks on a log grid.

    ``score_fn(lams) -> float`` is minimized one block at a time, starting from
    the grid value closest to 1; ties go to the larger lambda.
    """
    grid = _penalized.default_lambda_grid() if lambda_grid is None else np.asarray(
        lambda_grid, dtype=float
    )
    if n_blocks == 0:
        return np.zeros(0)
    lams = np.full(n_blocks, grid[np.argmin(np.abs(np.log(grid)))])
    if grid.size == 1:
        return lams
    for _ in range(sweeps):
        for b in range(n_blocks):
            scores = []
            for lam in grid:
                trial = lams.copy()
                trial[b] = lam
                scores.append(score_fn(trial))
            lams[b] = grid[_penalized.argmin_prefer_larger(grid, scores)]
    return lams


def _gcv_fn(problem: _Problem, nobs: int):
    def score(lams):
        try:
            sol = _solve_quiet(problem, lams)
        except RankDeficiencyError:
            return np.inf
        return _penalized.gcv_score(sol.rss, sol.edf, nobs)

    return score


def _solve_quiet(problem, lams, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return _solve(problem, lams, **kw)


def _basis_for(grid: Grid, basis: Optional[BasisSystem], k: int = DEFAULT_K) -> BasisSystem:
    if basis is not None:
        if basis.domain != grid.domain:
            raise DimensionError("basis domain differs from the covariate domain")
        return basis
    return make_bspline_basis(grid.domain, min(k, max(4, len(grid) - 2)), 4)


def _critical(level: float) -> float:
    if not 0 < level < 1:
        raise InputError("confidence level must lie in (0, 1)")
    return float(norm.ppf(1 - (1 - level) / 2))


# -- scalar-on-function ----------------------------------------------------------


@dataclass
class SofrDesign:
    """Scalar response with functional (and optional scalar) covariates."""

    y: np.ndarray
    covariates: Sequence[FunctionalSample]
    Z: Optional[np.ndarray] = None
    bases: Optional[Sequence[BasisSystem]] = None
    penalty_order: int = 2

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float).ravel()
        n = self.y.size
        if isinstance(self.covariates, FunctionalSample):
            self.covariates = [self.covariates]
        self.covariates = list(self.covariates)
        if not self.covariates:
            raise InputError("at least one functional covariate is required")
        for j, X in enumerate(self.covariates):
            if X.n != n:
                raise DimensionError(f"covariate {j} has {X.n} curves but y has {n} entries")
        if self.Z is not None:
            Z = np.asarray(self.Z, dtype=float)
            if Z.ndim == 1:
                Z = Z[:, None]
            if Z.shape[0] != n:
                raise DimensionError("Z must have one row per observation")
            self.Z = Z
        if self.bases is None:
            self.bases = [_basis_for(X.grid, None) for X in self.covariates]
        else:
            self.bases = [_basis_for(X.grid, b) for X, b in zip(self.covariates, self.bases)]
            if len(self.bases) != len(self.covariates):
                raise InputError("need one basis per functional covariate")

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def q(self) -> int:
        return 0 if self.Z is None else self.Z.shape[1]

    def functional_columns(self) -> list:
        """``X_j W_j Phi_j`` per covariate (the quadrature-weighted design)."""
        cols = []
        for X, b in zip(self.covariates, self.bases):
            Phi = eval_basis(b, X.grid.points)
            cols.append((X.values * X.grid.weights) @ Phi)
        return cols

    def problem(self, y=None) -> _Problem:
        y = self.y if y is None else y
        parts = [np.ones((self.n, 1))]
        blocks = {"intercept": slice(0, 1)}
        pos = 1
        if self.Z is not None:
            parts.append(self.Z)
            blocks["Z"] = slice(pos, pos + self.q)
            pos += self.q
        penalties = []
        for j, (F, b) in enumerate(zip(self.functional_columns(), self.bases)):
            sl = slice(pos, pos + b.n_basis)
            parts.append(F)
            blocks[f"beta{j + 1}"] = sl
            D = difference_penalty(b.n_basis, self.penalty_order, b).difference_matrix
            penalties.append(_Penalty(sl, D, f"beta{j + 1}"))
            pos += b.n_basis
        unpen = np.zeros(pos, dtype=bool)
        unpen[: 1 + self.q] = True
        return _Problem(np.hstack(parts), y, None, penalties, blocks, unpen)


@dataclass
class RegressionFit:
    """Fitted scalar-on-function model."""

    family: str
    intercept: float
    gamma: np.ndarray
    betas: list  # coefficient functions on each covariate grid
    grids: list
    bases: list
    coef: np.ndarray
    cov: np.ndarray  # posterior covariance Gamma_b of all coefficients
    lams: np.ndarray
    sigma2: float
    fitted: np.ndarray  # response scale (probabilities for logit)
    linear_predictor: np.ndarray
    edf: float
    blocks: dict
    n_iter: int = 0
    deviance_path: list = field(default_factory=list)
    converged: bool = True

    def ci_parts(self, j: int):
        sl = self.blocks[f"beta{j + 1}"]
        Phi = eval_basis(self.bases[j], self.grids[j].points)
        return Phi, self.cov[sl, sl], self.betas[j]

    def predict(self, covariates, Z=None, type: str = "response") -> np.ndarray:
        if isinstance(covariates, FunctionalSample):
            covariates = [covariates]
        eta = np.full(covariates[0].n, self.intercept)
        if self.gamma.size:
            Z = np.atleast_2d(np.asarray(Z, dtype=float))
            if Z.shape[0] != covariates[0].n and Z.shape[1] == covariates[0].n:
                Z = Z.T
            eta = eta + Z @ self.gamma
        for X, g, beta in zip(covariates, self.grids, self.betas):
            if X.grid != g:
                beta = np.interp(X.grid.points, g.points, beta)
            eta = eta + (X.values * X.grid.weights) @ beta
        if self.family == "binomial" and type == "response":
            return expit(eta)
        return eta


def _sofr_fit_from(design: SofrDesign, problem: _Problem, sol, lams, family, sigma2, eta,
                   **extra) -> RegressionFit:
    coef = sol.coef
    q = design.q
    betas = []
    for j, b in enumerate(design.bases):
        sl = problem.blocks[f"beta{j + 1}"]
        betas.append(eval_basis(b, design.covariates[j].grid.points) @ coef[sl])
    fitted = expit(eta) if family == "binomial" else eta
    return RegressionFit(
        family=family,
        intercept=float(coef[0]),
        gamma=coef[1 : 1 + q].copy(),
        betas=betas,
        grids=[X.grid for X in design.covariates],
        bases=list(design.bases),
        coef=coef,
        cov=sigma2 * sol.cov_unscaled if family == "gaussian" else sol.cov_unscaled,
        lams=np.asarray(lams, dtype=float),
        sigma2=float(sigma2),
        fitted=fitted,
        linear_predictor=eta,
        edf=sol.edf,
        blocks=problem.blocks,
        **extra,
    )


def fit_sofr_linear(design: SofrDesign, lam=None, lambda_grid=None) -> RegressionFit:
    """Gaussian scalar-on-function regression by penalized least squares.

    Minimizes ``|y - 1 alpha - Z gamma - sum_j X_j W_j Phi_j b_j|^2 +
    sum_j lam_j b_j^T Omega_j b_j`` with the intercept and ``gamma``
    unpenalized. ``lam=None`` selects one lambda per covariate by GCV.

    The posterior covariance is ``sigma^2 (M^T M + P)^+`` with
    ``sigma^2 = RSS / (n - edf)``; it is conditional on the chosen lambdas.
    """
    problem = design.problem()
    n_pen = len(problem.penalties)
    lams = _as_lams(lam, n_pen)
    if lams is None:
        lams = select_lambdas(_gcv_fn(problem, design.n), n_pen, lambda_grid)
    sol = _solve(problem, lams)
    dof = design.n - sol.edf
    sigma2 = sol.rss / dof if dof > 1e-8 else 0.0
    return _sofr_fit_from(design, problem, sol, lams, "gaussian", sigma2, sol.fitted)


def _binomial_deviance(y, mu):
    mu = np.clip(mu, 1e-15, 1 - 1e-15)
    return float(-2 * np.sum(y * np.log(mu) + (1 - y) * np.log1p(-mu)))


def _separates(eta, y) -> bool:
    return bool(eta[y == 1].min() > eta[y == 0].max())


def _pirls(problem: _Problem, y, lams):
    """Penalized IRLS with step halving; returns (solution, coef, eta, info)."""
    X = problem.X
    P = problem.penalty_matrix(lams)
    mu = (y + 0.5) / 2
    eta = np.log(mu / (1 - mu))
    coef = None
    pdev_path = []
    converged = False
    sol = None
    it = 0
    for it in range(1, IRLS_MAX_ITER + 1):
        w = np.clip(mu * (1 - mu), 1e-10, None)
        z = eta + (y - mu) / w
        sol = _solve(problem, lams, y=z, weights=w)
        new = sol.coef
        if coef is not None:
            old_pdev = pdev_path[-1]
            step = 1.0
            cand = new
            for _ in range(30):
                eta_c = X @ cand
                pdev = _binomial_deviance(y, expit(eta_c)) + cand @ P @ cand
                if pdev <= old_pdev + 1e-8 * max(1.0, abs(old_pdev)):
                    break
                step /= 2
                cand = coef + step * (new - coef)
            new = cand
        delta = np.inf if coef is None else np.max(np.abs(new - coef))
        coef = new
        eta = X @ coef
        mu = expit(eta)
        pdev_path.append(_binomial_deviance(y, mu) + coef @ P @ coef)
        if np.linalg.norm(coef) > SEPARATION_NORM:
            raise SeparationError(
                "coefficients diverge (|b| > 1e4): the classes look completely separated; "
                "use a larger smoothing parameter (lambda > 0)"
            )
        if delta < IRLS_TOL:
            converged = True
            break
    if not np.any(np.asarray(lams) > 0) and _separates(eta, y):
        # with no penalty a separating predictor means the MLE does not exist
        raise SeparationError(
            "the linear predictor separates the classes completely, so the unpenalized fit "
            "diverges; use a larger smoothing parameter (lambda > 0)"
        )
    # covariance at the converged weights
    w = np.clip(mu * (1 - mu), 1e-10, None)
    sol = _solve(problem, lams, y=eta + (y - mu) / w, weights=w)
    return sol, coef, eta, dict(n_iter=it, deviance_path=pdev_path, converged=converged)


def fit_sofr_logit(design: SofrDesign, lam=None, lambda_grid=None) -> RegressionFit:
    """Functional logit model fitted by penalized IRLS.

    ``logit P(y=1) = alpha + Z gamma + sum_j int x_j beta_j``; iterations stop
    when the largest coefficient change drops below 1e-8 (at most 50).
    ``lam=None`` picks lambdas by GCV on the deviance, ``n D / (n - edf)^2``.
    """
    y = design.y
    if not np.all((y == 0) | (y == 1)):
        raise InputError("logit response must be coded 0/1")
    if y.min() == y.max():
        raise InputError("logit response needs both classes present")
    problem = design.problem()
    n_pen = len(problem.penalties)
    lams = _as_lams(lam, n_pen)
    if lams is None:

        def score(trial):
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", RuntimeWarning)
                    sol, coef, eta, _ = _pirls(problem, y, trial)
            except (SeparationError, RankDeficiencyError):
                return np.inf
            return _penalized.gcv_score(_binomial_deviance(y, expit(eta)), sol.edf, design.n)

        lams = select_lambdas(score, n_pen, lambda_grid)
    sol, coef, eta, info = _pirls(problem, y, lams)
    sol.coef = coef
    return _sofr_fit_from(design, problem, sol, lams, "binomial", 1.0, eta, **info)


def pointwise_ci(fit, j: int = 0, level: float = 0.95):
    """Pointwise interval ``beta(t_v) +/- z_{1-alpha/2} sqrt(zeta_v)``.

    ``zeta`` is the diagonal of ``Phi Gamma Phi^T`` for the coefficient block
    of covariate ``j``. Returns ``(lower, upper)`` on that covariate's grid.
    """
    z = _critical(level)
    Phi, cov, est = fit.ci_parts(j)
    zeta = np.einsum("vk,kl,vl->v", Phi, cov, Phi)
    half = z * np.sqrt(np.clip(zeta, 0.0, None))
    return est - half, est + half


# -- function-on-scalar and function-on-function ----------------------------------


def _robust_cov(problem: _Problem, sol, n_curves: int, V: int):
    """Sandwich covariance with per-curve residual functions as clusters."""
    X, w = problem.X, problem.weights
    resid = (problem.y - sol.fitted) * w
    S = (X * resid[:, None]).reshape(n_curves, V, -1).sum(axis=1)
    bread = sol.cov_unscaled
    return bread @ (S.T @ S) @ bread


@dataclass
class FunctionResponseFit:
    """Shared fields of function-on-scalar and function-on-function fits."""

    grid: Grid
    basis: BasisSystem
    coef: np.ndarray
    cov: np.ndarray  # sandwich covariance of all basis coefficients
    lams: np.ndarray
    fitted: np.ndarray  # n x V
    residual_variance: np.ndarray  # pointwise, on the grid
    blocks: dict
    edf: float


@dataclass
class FosrFit(FunctionResponseFit):
    alpha: np.ndarray = None
    betas: np.ndarray = None  # q x V

    def ci_parts(self, j: int):
        """``j = 0`` is the intercept function, ``j >= 1`` the covariate effects."""
        name = "alpha" if j == 0 else f"beta{j}"
        sl = self.blocks[name]
        Phi = eval_basis(self.basis, self.grid.points)
        est = self.alpha if j == 0 else self.betas[j - 1]
        return Phi, self.cov[sl, sl], est

    def predict(self, Z) -> np.ndarray:
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        return self.alpha + Z @ self.betas


@dataclass
class FofrFit(FunctionResponseFit):
    alpha: np.ndarray = None
    betas: Optional[np.ndarray] = None  # concurrent: p x V
    surfaces: Optional[list] = None  # integral model: p surfaces, s-grid x t-grid
    s_grids: Optional[list] = None
    s_bases: Optional[list] = None
    limits: str = "concurrent"
    lag: Optional[float] = None
    window_weights: Optional[list] = None

    def ci_parts(self, j: int):
        if self.limits != "concurrent":
            raise InputError("pointwise intervals are available for concurrent effects only")
        name = "alpha" if j == 0 else f"beta{j}"
        sl = self.blocks[name]
        Phi = eval_basis(self.basis, self.grid.points)
        est = self.alpha if j == 0 else self.betas[j - 1]
        return Phi, self.cov[sl, sl], est

    def predict(self, covariates) -> np.ndarray:
        if isinstance(covariates, FunctionalSample):
            covariates = [covariates]
        out = np.tile(self.alpha, (covariates[0].n, 1))
        if self.limits == "concurrent":
            for X, beta in zip(covariates, self.betas):
                out = out + X.values * beta
            return out
        for X, surf, Wm in zip(covariates, self.surfaces, self.window_weights):
            out = out + X.values @ (Wm * surf)
        return out


def _response_weights(Y: FunctionalSample):
    return np.tile(Y.grid.weights, Y.n)


def _fit_function_response(problem, n, V, lam, lambda_grid):
    n_pen = len(problem.penalties)
    lams = _as_lams(lam, n_pen)
    if lams is None:
        lams = select_lambdas(_gcv_fn(problem, n * V), n_pen, lambda_grid)
    sol = _solve(problem, lams)
    cov = _robust_cov(problem, sol, n, V)
    return sol, lams, cov


def fit_fosr(
    Y: FunctionalSample,
    Z,
    basis: Optional[BasisSystem] = None,
    lam=None,
    lambda_grid=None,
    penalty_order: int = 2,
) -> FosrFit:
    """Function-on-scalar regression ``Y_i(t) = alpha(t) + sum_j z_ij beta_j(t)``.

    All coefficient functions share one basis in ``t`` and each has its own
    difference penalty. The loss is the quadrature-weighted L2 residual
    norm summed over curves; inference uses a sandwich covariance clustered
    by curve, so within-curve residual correlation is accounted for.
    """
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    n, q = Z.shape
    if q < 1:
        raise InputError("need at least one scalar covariate")
    if n != Y.n:
        raise DimensionError("Z must have one row per response curve")
    Zf = np.hstack([np.ones((n, 1)), Z])
    if np.linalg.matrix_rank(Zf) < Zf.shape[1]:
        bad = [j for j in range(q) if not np.any(Z[:, j] - Z[:, j].mean())]
        what = f"column(s) {bad} constant or zero" if bad else "collinear columns"
        raise RankDeficiencyError(f"scalar design [1 | Z] is rank deficient: {what}")
    basis = _basis_for(Y.grid, basis)
    Phi = eval_basis(basis, Y.grid.points)
    K = basis.n_basis
    V = len(Y.grid)
    X = np.einsum("ij,vk->ivjk", Zf, Phi).reshape(n * V, (q + 1) * K)
    D = difference_penalty(K, penalty_order, basis).difference_matrix
    blocks, penalties = {}, []
    for j in range(q + 1):
        name = "alpha" if j == 0 else f"beta{j}"
        sl = slice(j * K, (j + 1) * K)
        blocks[name] = sl
        penalties.append(_Penalty(sl, D, name))
    problem = _Problem(X, Y.values.ravel(), _response_weights(Y), penalties, blocks,
                       np.zeros(X.shape[1], dtype=bool))
    sol, lams, cov = _fit_function_response(problem, n, V, lam, lambda_grid)
    coef = sol.coef.reshape(q + 1, K)
    funcs = coef @ Phi.T
    fitted = sol.fitted.reshape(n, V)
    resid_var = ((Y.values - fitted) ** 2).sum(axis=0) / max(n - q - 1, 1)
    return FosrFit(Y.grid, basis, sol.coef, cov, lams, fitted, resid_var, blocks, sol.edf,
                   alpha=funcs[0], betas=funcs[1:])


def _check_covariates(Y, Xs, same_grid: bool):
    if isinstance(Xs, FunctionalSample):
        Xs = [Xs]
    Xs = list(Xs)
    for j, X in enumerate(Xs):
        if X.n != Y.n:
            raise DimensionError(f"covariate {j} has {X.n} curves, response has {Y.n}")
        if same_grid and X.grid != Y.grid:
            raise DimensionError(f"covariate {j} is not observed on the response grid")
    return Xs


def fit_fofr_concurrent(
    Y: FunctionalSample,
    Xs,
    basis: Optional[BasisSystem] = None,
    lam=None,
    lambda_grid=None,
    penalty_order: int = 2,
) -> FofrFit:
    """Concurrent model ``Y_i(t) = alpha(t) + sum_j x_ij(t) beta_j(t)``."""
    Xs = _check_covariates(Y, Xs, same_grid=True)
    basis = _basis_for(Y.grid, basis)
    Phi = eval_basis(basis, Y.grid.points)
    K = basis.n_basis
    n, V = Y.values.shape
    p = len(Xs)
    regs = np.stack([np.ones((n, V))] + [X.values for X in Xs], axis=2)  # n x V x (p+1)
    design = (regs[:, :, :, None] * Phi[None, :, None, :]).reshape(n * V, (p + 1) * K)
    D = difference_penalty(K, penalty_order, basis).difference_matrix
    blocks, penalties = {}, []
    for j in range(p + 1):
        name = "alpha" if j == 0 else f"beta{j}"
        sl = slice(j * K, (j + 1) * K)
        blocks[name] = sl
        penalties.append(_Penalty(sl, D, name))
    problem = _Problem(design, Y.values.ravel(), _response_weights(Y), penalties, blocks,
                       np.zeros(design.shape[1], dtype=bool))
    sol, lams, cov = _fit_function_response(problem, n, V, lam, lambda_grid)
    funcs = sol.coef.reshape(p + 1, K) @ Phi.T
    fitted = sol.fitted.reshape(n, V)
    resid_var = ((Y.values - fitted) ** 2).sum(axis=0) / max(n - p - 1, 1)
    return FofrFit(Y.grid, basis, sol.coef, cov, lams, fitted, resid_var, blocks, sol.edf,
                   alpha=funcs[0], betas=funcs[1:], limits="concurrent")


def window_weights(s_grid: Grid, t_grid: Grid, limits: str = "full", lag: Optional[float] = None):
    """Quadrature weights ``W[u, v]`` for ``int x(s) beta(s, t_v) ds`` over a window.

    ``full`` integrates over the whole ``s`` domain, ``past`` over
    ``[a, t_v]`` and ``lag`` over ``[t_v - lag, t_v]``; each window gets its
    own trapezoid weights on the grid points it contains.
    """
    s = s_grid.points
    U, V = len(s_grid), len(t_grid)
    if limits == "full":
        return np.tile(s_grid.weights[:, None], (1, V))
    if limits not in ("past", "lag"):
        raise InputError(f"unknown integration limits {limits!r}; use full, past or lag")
    if limits == "lag" and (lag is None or lag <= 0):
        raise InputError("lag limits need a positive lag h")
    a = s[0]
    tol = 1e-12 * (s[-1] - s[0])
    W = np.zeros((U, V))
    for v, tv in enumerate(t_grid.points):
        lower = a if limits == "past" else max(a, tv - lag)
        upper = min(tv, s[-1])
        if upper - lower <= tol:
            continue
        idx = np.flatnonzero((s >= lower - tol) & (s <= upper + tol))
        if idx.size < 2:
            raise InputError(
                f"integration window [{lower:.4g}, {upper:.4g}] at t={tv:.4g} contains fewer "
                "than 2 grid points; increase the lag or refine the grid"
            )
        W[idx, v] = trapezoid_weights(s[idx])
    return W


def fit_fofr_linear(
    Y: FunctionalSample,
    Xs,
    s_basis: Optional[BasisSystem] = None,
    t_basis: Optional[BasisSystem] = None,
    lam_s=None,
    lam_t=None,
    limits: str = "full",
    lag: Optional[float] = None,
    lam_alpha=None,
    lambda_grid=None,
    penalty_order: int = 2,
    k_s: int = 8,
    k_t: int = 8,
) -> FofrFit:
    """Linear function-on-function model with tensor-product coefficient surfaces.

    ``Y_i(t) = alpha(t) + sum_j int_{window(t)} x_ij(s) beta_j(s, t) ds`` with
    ``beta_j(s, t) = sum_kl phi_k(s) psi_l(t) b_kl`` and the anisotropic penalty
    ``lam_s (Omega_s x I) + lam_t (I x Omega_t)``. Surface coefficients that
    never touch an integration window are pinned to zero.
    """
    Xs = _check_covariates(Y, Xs, same_grid=False)
    if limits != "full":
        for X in Xs:
            if X.grid.domain != Y.grid.domain:
                raise DimensionError("historical limits need covariates on the response domain")
    tb = _basis_for(Y.grid, t_basis, k_t)
    Psi = eval_basis(tb, Y.grid.points)
    Kt = tb.n_basis
    n, V = Y.values.shape
    Dt = difference_penalty(Kt, penalty_order, tb).difference_matrix
    parts = [np.tile(Psi, (n, 1))]
    blocks = {"alpha": slice(0, Kt)}
    penalties = [_Penalty(blocks["alpha"], Dt, "alpha")]
    pos = Kt
    s_bases, Wms = [], []
    for j, X in enumerate(Xs):
        sb = _basis_for(X.grid, s_basis, k_s)
        Phi_s = eval_basis(sb, X.grid.points)
        Ks = sb.n_basis
        Wm = window_weights(X.grid, Y.grid, limits, lag)
        C = np.einsum("iu,uv,uk->ivk", X.values, Wm, Phi_s)
        cols = (C[:, :, :, None] * Psi[None, :, None, :]).reshape(n * V, Ks * Kt)
        parts.append(cols)
        sl = slice(pos, pos + Ks * Kt)
        blocks[f"beta{j + 1}"] = sl
        Ds = difference_penalty(Ks, penalty_order, sb).difference_matrix
        penalties.append(_Penalty(sl, np.kron(Ds, np.eye(Kt)), f"beta{j + 1}_s"))
        penalties.append(_Penalty(sl, np.kron(np.eye(Ks), Dt), f"beta{j + 1}_t"))
        pos += Ks * Kt
        s_bases.append(sb)
        Wms.append(Wm)
    design = np.hstack(parts)
    problem = _Problem(design, Y.values.ravel(), _response_weights(Y), penalties, blocks,
                       np.zeros(pos, dtype=bool))
    lam = None
    if lam_s is not None or lam_t is not None or lam_alpha is not None:
        if lam_s is None or lam_t is None:
            raise InputError("give both lam_s and lam_t, or neither")
        ls = _as_lams(lam_s, len(Xs))
        lt = _as_lams(lam_t, len(Xs))
        la = 1.0 if lam_alpha is None else float(lam_alpha)
        lam = np.concatenate([[la], np.column_stack([ls, lt]).ravel()])
    sol, lams, cov = _fit_function_response(problem, n, V, lam, lambda_grid)
    alpha = Psi @ sol.coef[blocks["alpha"]]
    surfaces = []
    for j, (X, sb) in enumerate(zip(Xs, s_bases)):
        B = sol.coef[blocks[f"beta{j + 1}"]].reshape(sb.n_basis, Kt)
        surfaces.append(eval_basis(sb, X.grid.points) @ B @ Psi.T)
    fitted = sol.fitted.reshape(n, V)
    resid_var = ((Y.values - fitted) ** 2).sum(axis=0) / max(n - 1, 1)
    return FofrFit(Y.grid, tb, sol.coef, cov, lams, fitted, resid_var, blocks, sol.edf,
                   alpha=alpha, surfaces=surfaces, s_grids=[X.grid for X in Xs],
                   s_bases=s_bases, limits=limits, lag=lag, window_weights=Wms)
