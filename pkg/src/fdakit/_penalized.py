"""Penalized (weighted) least squares via an SVD of the augmented system.

Solving ``[sqrt(W) X; L] b = [sqrt(W) y; 0]`` with ``L^T L = P`` avoids forming
``X^T W X + P`` explicitly, which keeps very large penalties (1e12 and up)
accurate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

RANK_RTOL = 1e-10


@dataclass
class PenalizedSolution:
    coef: np.ndarray
    cov_unscaled: np.ndarray  # (X^T W X + P)^+
    edf: float  # trace of the hat matrix
    rss: float  # weighted residual sum of squares
    fitted: np.ndarray
    rank: int
    null_space: np.ndarray  # columns span the numerical null space


def penalty_root(P: np.ndarray, tol: float = 1e-13) -> np.ndarray:
    """Matrix ``L`` with ``L^T L = P`` for a symmetric PSD ``P``."""
    P = np.asarray(P, dtype=float)
    if P.size == 0 or not np.any(P):
        return np.zeros((0, P.shape[0]))
    evals, evecs = np.linalg.eigh((P + P.T) / 2)
    keep = evals > tol * max(evals.max(), 0.0)
    return np.sqrt(evals[keep])[:, None] * evecs[:, keep].T


def solve(X, y, P=None, weights=None, root=None) -> PenalizedSolution:
    """Minimize ``(y - Xb)^T W (y - Xb) + b^T P b``.

    ``root`` may carry a precomputed ``L`` with ``L^T L = P``. Rank deficiency
    is not an error here: the minimum-norm solution is returned and callers
    inspect ``null_space``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    sw = np.ones(n) if weights is None else np.sqrt(np.asarray(weights, dtype=float))
    if root is None:
        root = penalty_root(P) if P is not None else np.zeros((0, p))
    A = np.vstack([X * sw[:, None], root])
    rhs = np.concatenate([y * sw, np.zeros(root.shape[0])])
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    smax = s[0] if s.size else 0.0
    r = int(np.sum(s > RANK_RTOL * smax)) if smax > 0 else 0
    Ur, sr, Vr = U[:, :r], s[:r], Vt[:r].T
    coef = Vr @ ((Ur.T @ rhs) / sr)
    cov = (Vr / sr**2) @ Vr.T
    fitted = X @ coef
    resid = (y - fitted) * sw
    edf = float(np.sum(((X * sw[:, None]) @ (Vr / sr)) ** 2))
    if Vt.shape[0] < p:
        # wide system: complete the null-space basis
        _, _, Vfull = np.linalg.svd(A, full_matrices=True)
        null = Vfull[r:].T
    else:
        null = Vt[r:].T
    return PenalizedSolution(coef, cov, edf, float(resid @ resid), fitted, r, null)


def gcv_score(rss: float, edf: float, nobs: int) -> float:
    """``n * RSS / (n - edf)^2``; ``inf`` when the fit interpolates."""
    denom = nobs - edf
    if denom <= 1e-8 * nobs:
        return np.inf
    return nobs * rss / denom**2


def argmin_prefer_larger(values, scores) -> int:
    """Index of the minimal score; ties go to the largest value."""
    scores = np.asarray(scores, dtype=float)
    best = np.min(scores)
    tol = 1e-12 * abs(best) if np.isfinite(best) else 0.0
    cand = np.flatnonzero(scores <= best + tol)
    vals = np.asarray(values, dtype=float)
    return int(cand[np.argmax(vals[cand])])


def default_lambda_grid() -> np.ndarray:
    return np.logspace(-6, 6, 25)
