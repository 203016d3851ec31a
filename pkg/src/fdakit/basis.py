"""B-spline bases, difference penalties and P-spline curve smoothing."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _penalized
from .exceptions import (
    DegenerateError,
    DimensionError,
    InputError,
    InvalidBasisError,
    OutOfDomainError,
    RankDeficiencyError,
)

DOMAIN_TOL = 1e-12


@dataclass(frozen=True)
class BasisSystem:
    """Clamped B-spline basis with equidistant interior knots.

    Attributes
    ----------
    domain : (a, b)
    n_basis : int
        Number of basis functions ``K``.
    order : int
        Spline order (degree + 1); 4 is cubic.
    interior_knots : ndarray
    """

    domain: tuple
    n_basis: int
    order: int
    interior_knots: np.ndarray

    @property
    def knots(self) -> np.ndarray:
        a, b = self.domain
        return np.concatenate([[a] * self.order, self.interior_knots, [b] * self.order])

    def __call__(self, points) -> np.ndarray:
        return eval_basis(self, points)


def make_bspline_basis(domain=(0.0, 1.0), n_basis: int = 10, order: int = 4) -> BasisSystem:
    """Build a clamped B-spline basis with ``n_basis - order`` equidistant interior knots."""
    a, b = float(domain[0]), float(domain[1])
    if not b > a:
        raise InvalidBasisError("basis domain must satisfy a < b")
    if order < 2:
        raise InvalidBasisError(f"spline order must be >= 2, got {order}")
    if n_basis < order:
        raise InvalidBasisError(f"need n_basis >= order, got n_basis={n_basis}, order={order}")
    n_interior = n_basis - order
    interior = a + (b - a) * np.arange(1, n_interior + 1) / (n_interior + 1)
    interior.setflags(write=False)
    return BasisSystem((a, b), int(n_basis), int(order), interior)


def eval_basis(basis: BasisSystem, points) -> np.ndarray:
    """Evaluate all basis functions at ``points`` (Cox-de Boor recursion).

    Returns the ``len(points) x K`` matrix ``Phi[v, k] = phi_k(t_v)``. The
    right endpoint belongs to the last knot interval, so rows sum to one on
    the closed domain.
    """
    x = np.atleast_1d(np.asarray(points, dtype=float))
    if x.ndim != 1:
        raise DimensionError("points must be one-dimensional")
    a, b = basis.domain
    span = b - a
    if np.any(x < a - DOMAIN_TOL * span) or np.any(x > b + DOMAIN_TOL * span):
        bad = x[(x < a - DOMAIN_TOL * span) | (x > b + DOMAIN_TOL * span)][0]
        raise OutOfDomainError(f"point {bad!r} lies outside the basis domain [{a}, {b}]")
    x = np.clip(x, a, b)
    knots = basis.knots
    K, order = basis.n_basis, basis.order
    N = x.size
    idx = np.searchsorted(knots, x, side="right") - 1
    idx = np.clip(idx, order - 1, K - 1)
    B = np.zeros((N, knots.size - 1))
    B[np.arange(N), idx] = 1.0
    for k in range(2, order + 1):
        nb = knots.size - k
        Bn = np.zeros((N, nb))
        for i in range(nb):
            d1 = knots[i + k - 1] - knots[i]
            d2 = knots[i + k] - knots[i + 1]
            if d1 > 0:
                Bn[:, i] += (x - knots[i]) / d1 * B[:, i]
            if d2 > 0:
                Bn[:, i] += (knots[i + k] - x) / d2 * B[:, i + 1]
        B = Bn
    return B


@dataclass(frozen=True)
class PenaltyMatrix:
    matrix: np.ndarray
    difference_matrix: np.ndarray
    order: int


def difference_penalty(n_basis: int, order: int = 2, basis: BasisSystem | None = None) -> PenaltyMatrix:
    """``Omega = D^T D`` for the ``order``-th difference matrix ``D``.

    Without ``basis`` this is the plain P-spline difference matrix. With a
    clamped ``basis`` whose boundary coefficients sit closer together than
    the interior ones, each row of ``D`` is adjusted (on the same ``order + 1``
    neighbouring coefficients) so that the penalty vanishes exactly on
    polynomials of degree below ``order``. Rows away from the boundary, and
    every row of a basis with equally spaced Greville abscissae, equal the
    plain differences.
    """
    if not 1 <= order <= n_basis - 1:
        raise InvalidBasisError(
            f"difference order must lie in [1, {n_basis - 1}] for {n_basis} coefficients"
        )
    D = np.diff(np.eye(n_basis), n=order, axis=0)
    if basis is not None:
        if basis.n_basis != n_basis:
            raise InvalidBasisError("basis size does not match the number of coefficients")
        if order <= basis.order:
            D = _polynomial_annihilator(basis, order, D)
    Omega = D.T @ D
    D.setflags(write=False)
    Omega.setflags(write=False)
    return PenaltyMatrix(Omega, D, order)


def _polynomial_annihilator(basis, order, D):
    a, b = basis.domain
    u = np.linspace(a, b, 4 * basis.n_basis + 8)
    Phi = eval_basis(basis, u)
    mono = np.vander((u - a) / (b - a), order, increasing=True)
    C = np.linalg.lstsq(Phi, mono, rcond=None)[0]  # coefficients of 1, s, ..., s^(order-1)
    out = np.zeros_like(D)
    for j in range(D.shape[0]):
        local = C[j : j + order + 1].T  # order x (order + 1)
        row = np.linalg.svd(local)[2][-1]
        out[j, j : j + order + 1] = row / row[-1]
    # interior rows come out equal to the plain differences up to rounding
    close = np.abs(out - D) < 1e-9
    out[close] = D[close]
    return out


@dataclass(frozen=True)
class SmoothedCurve:
    basis: BasisSystem
    coef: np.ndarray
    lam: float
    gcv: float
    edf: float
    points: np.ndarray
    fitted: np.ndarray

    def __call__(self, points) -> np.ndarray:
        return eval_basis(self.basis, points) @ self.coef


def _obs(t, x):
    t = np.asarray(t, dtype=float).ravel()
    x = np.asarray(x, dtype=float).ravel()
    if t.size != x.size:
        raise DimensionError("observation times and values differ in length")
    if t.size == 0:
        raise InputError("no observations to smooth")
    return t, x


def _fit(Phi, x, Omega_root, lam):
    root = np.sqrt(lam) * Omega_root
    return _penalized.solve(Phi, x, root=root)


def smooth_curve(
    t,
    x,
    basis: BasisSystem,
    lam: float,
    penalty_order: int = 2,
) -> SmoothedCurve:
    """Penalized least-squares fit of ``(t, x)`` observations in ``basis``.

    Minimizes ``sum_l (x_l - Phi(t_l) theta)^2 + lam * theta^T Omega theta``
    with ``Omega`` the difference penalty of ``penalty_order``.

    Raises
    ------
    RankDeficiencyError
        If the penalized normal matrix is singular; ``err.direction`` holds a
        coefficient vector spanning the offending null space.
    """
    if lam < 0 or not np.isfinite(lam):
        raise InputError(f"lambda must be a finite nonnegative number, got {lam}")
    t, x = _obs(t, x)
    Phi = eval_basis(basis, t)
    pen = difference_penalty(basis.n_basis, penalty_order, basis)
    sol = _fit(Phi, x, pen.difference_matrix, lam)
    if sol.rank < basis.n_basis:
        direction = sol.null_space[:, 0]
        raise RankDeficiencyError(
            f"penalized normal matrix is singular (rank {sol.rank} < {basis.n_basis}); "
            f"null-space coefficient direction {np.round(direction, 4).tolist()}; "
            "add observation points or increase lambda",
            direction=direction,
        )
    score = _penalized.gcv_score(sol.rss, sol.edf, t.size)
    coef = sol.coef
    coef.setflags(write=False)
    return SmoothedCurve(basis, coef, float(lam), score, sol.edf, t, sol.fitted)


def gcv_select_lambda(
    t,
    x,
    basis: BasisSystem,
    lambda_grid=None,
    penalty_order: int = 2,
):
    """Pick the GCV-optimal smoothing parameter from ``lambda_grid``.

    ``GCV(lam) = V * RSS / (V - tr H)^2``; ties go to the larger lambda.

    Returns
    -------
    (best_lambda, scores) with ``scores`` aligned to the grid.
    """
    t, x = _obs(t, x)
    grid = _penalized.default_lambda_grid() if lambda_grid is None else np.atleast_1d(
        np.asarray(lambda_grid, dtype=float)
    )
    if grid.size == 0 or np.any(grid <= 0):
        raise InputError("lambda grid must be nonempty and positive")
    Phi = eval_basis(basis, t)
    D = difference_penalty(basis.n_basis, penalty_order, basis).difference_matrix
    scores = np.empty(grid.size)
    for i, lam in enumerate(grid):
        sol = _fit(Phi, x, D, lam)
        scores[i] = _penalized.gcv_score(sol.rss, sol.edf, t.size)
    if not np.any(np.isfinite(scores)):
        raise DegenerateError(
            "GCV is undefined for every lambda: the smoother trace reaches the number of observations"
        )
    best = _penalized.argmin_prefer_larger(grid, scores)
    return float(grid[best]), scores


def smooth_curve_gcv(
    t,
    x,
    basis: BasisSystem,
    lambda_grid=None,
    penalty_order: int = 2,
) -> SmoothedCurve:
    lam, _ = gcv_select_lambda(t, x, basis, lambda_grid, penalty_order)
    return smooth_curve(t, x, basis, lam, penalty_order)


def smooth_sample(sample, basis: BasisSystem, lam: Optional[float] = None, lambda_grid=None,
                  penalty_order: int = 2):
    """Smooth every curve of a dense or sparse sample; returns a list of fits."""
    from .fdcore import FunctionalSample

    if isinstance(sample, FunctionalSample):
        pairs = [(sample.grid.points, row) for row in sample.values]
    else:
        pairs = list(zip(sample.times, sample.values))
    fits = []
    for t, x in pairs:
        if lam is None:
            fits.append(smooth_curve_gcv(t, x, basis, lambda_grid, penalty_order))
        else:
            fits.append(smooth_curve(t, x, basis, lam, penalty_order))
    return fits
