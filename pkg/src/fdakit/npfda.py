"""Kernel (Nadaraya-Watson type) regression and classification for curves.

Every semimetric here is a weighted Euclidean distance after an embedding
of the curves: ``sqrt(w) x`` for ``l2``, ``sqrt(w) x'`` for ``deriv_l2`` and
(optionally weighted) FPCA score vectors for ``fpca_scores``. Distances
are therefore computed once per embedding with ``scipy.spatial.distance``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .exceptions import DegenerateError, DimensionError, InputError, InsufficientSampleError, NoNeighborsError
from .fdcore import FunctionalSample, Grid, derivative
from .fpca import FpcaModel, fit_fpca, scores_integration

SEMIMETRICS = ("l2", "deriv_l2", "fpca_scores")
KERNELS = ("gaussian", "epanechnikov")
DEFAULT_SCORES_M = 5
DEFAULT_QUANTILES = np.round(np.arange(0.05, 0.951, 0.05), 2)


@dataclass(frozen=True)
class Semimetric:
    kind: str
    grid: Grid
    model: Optional[FpcaModel] = field(default=None, repr=False)
    weights: Optional[np.ndarray] = None  # per-score weights for fpca_scores

    def __post_init__(self):
        if self.kind not in SEMIMETRICS:
            raise InputError(f"unknown semimetric {self.kind!r}; choose from {', '.join(SEMIMETRICS)}")
        if self.kind == "fpca_scores":
            if self.model is None:
                raise InputError("fpca_scores semimetric needs a fitted FPCA model")
            if self.weights is not None:
                w = np.asarray(self.weights, dtype=float)
                if w.shape != (self.model.n_components,) or np.any(w < 0):
                    raise InputError("score weights must be nonnegative, one per component")
                object.__setattr__(self, "weights", w)

    @classmethod
    def l2(cls, grid: Grid) -> "Semimetric":
        return cls("l2", grid)

    @classmethod
    def deriv_l2(cls, grid: Grid) -> "Semimetric":
        return cls("deriv_l2", grid)

    @classmethod
    def fpca_scores(cls, train: FunctionalSample, M: int = DEFAULT_SCORES_M, weights=None) -> "Semimetric":
        """Score-space semimetric from an FPCA of the training curves.

        The covariance is the raw empirical one, decomposed without
        smoothing; ``M`` is capped at ``n - 1``, the rank of the centered sample.
        """
        if train.n < 2:
            raise InsufficientSampleError("fpca_scores semimetric needs at least 2 training curves")
        M = min(int(M), train.n - 1, len(train.grid))
        if M < 1:
            raise InputError("need at least one FPCA component")
        model = fit_fpca(train, n_components=M, smooth_covariance=False)
        return cls("fpca_scores", train.grid, model, weights)

    @classmethod
    def build(cls, kind: str, train: FunctionalSample, M: int = DEFAULT_SCORES_M) -> "Semimetric":
        if kind == "fpca_scores":
            return cls.fpca_scores(train, M)
        return cls(kind, train.grid)

    def embed(self, curves) -> np.ndarray:
        X = _curves(curves, self.grid)
        if self.kind == "l2":
            return X * np.sqrt(self.grid.weights)
        if self.kind == "deriv_l2":
            return derivative(X, self.grid) * np.sqrt(self.grid.weights)
        S = scores_integration(FunctionalSample(self.grid, X), self.model)
        return S if self.weights is None else S * np.sqrt(self.weights)

    def pairwise(self, a, b=None) -> np.ndarray:
        """Distance matrix between the rows of ``a`` and ``b`` (``a`` itself by default)."""
        ea = self.embed(a)
        if b is None:
            D = cdist(ea, ea)
            D = (D + D.T) / 2
            np.fill_diagonal(D, 0.0)
            return D
        return cdist(ea, self.embed(b))


def _curves(curves, grid: Grid) -> np.ndarray:
    if isinstance(curves, FunctionalSample):
        if curves.grid != grid:
            raise DimensionError("curves are not on the semimetric's grid")
        return curves.values
    X = np.atleast_2d(np.asarray(curves, dtype=float))
    if X.shape[-1] != len(grid):
        raise DimensionError(f"curves have {X.shape[-1]} points, the grid has {len(grid)}")
    return X


def semimetric_eval(sm: Semimetric, x1, x2) -> float:
    return float(sm.pairwise(np.atleast_2d(x1), np.atleast_2d(x2))[0, 0])


@dataclass(frozen=True)
class KernelSpec:
    kind: str = "gaussian"
    bandwidth: float = 1.0

    def __post_init__(self):
        if self.kind not in KERNELS:
            raise InputError(f"unknown kernel {self.kind!r}; choose from {', '.join(KERNELS)}")
        if not (np.isfinite(self.bandwidth) and self.bandwidth > 0):
            raise InputError("bandwidth must be positive and finite")

    def __call__(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if self.kind == "gaussian":
            return np.exp(-0.5 * u**2) / np.sqrt(2 * np.pi)
        return np.where(np.abs(u) <= 1, 0.75 * (1 - u**2), 0.0)


def kernel_weights(dist, kernel: KernelSpec, exclude=None) -> np.ndarray:
    """Row-normalized kernel weights ``K(d/h) / sum K(d/h)``.

    Gaussian weights are formed as ``exp(-(u^2 - min u^2) / 2)`` so that tiny
    bandwidths do not underflow every weight to zero. ``exclude`` masks
    entries (e.g. the diagonal for leave-one-out).
    """
    u = np.atleast_2d(np.asarray(dist, dtype=float)) / kernel.bandwidth
    if kernel.kind == "gaussian":
        u2 = u**2
        if exclude is not None:
            u2 = np.where(exclude, np.inf, u2)
        floor = np.min(u2, axis=1, keepdims=True)
        floor = np.where(np.isfinite(floor), floor, 0.0)
        K = np.exp(-0.5 * (u2 - floor))
    else:
        K = kernel(u)
        if exclude is not None:
            K = np.where(exclude, 0.0, K)
    total = K.sum(axis=1, keepdims=True)
    empty = total[:, 0] <= 0
    if np.any(empty):
        raise NoNeighborsError(
            f"no training curve within bandwidth {kernel.bandwidth:.6g} of query {int(np.flatnonzero(empty)[0])}"
        )
    return K / total


@dataclass
class NpPrediction:
    values: np.ndarray
    weights: np.ndarray  # n_new x n_train, rows sum to 1
    bandwidth: float


@dataclass
class ClassPrediction:
    probabilities: np.ndarray  # n_new x G
    classes: np.ndarray  # class labels in column order
    predicted: np.ndarray
    weights: np.ndarray
    bandwidth: float


def _prepare(train, new, sm):
    if not isinstance(train, FunctionalSample):
        raise InputError("training curves must be a FunctionalSample")
    if sm is None:
        sm = Semimetric.fpca_scores(train) if train.n >= 2 else Semimetric.l2(train.grid)
    return sm.pairwise(new, train)


def np_regress(train: FunctionalSample, y, new, kernel: KernelSpec, sm: Optional[Semimetric] = None
               ) -> NpPrediction:
    """Kernel estimate of ``E[Y | X = x]`` at each new curve."""
    y = np.asarray(y, dtype=float)
    if y.shape != (train.n,):
        raise DimensionError("need one response per training curve")
    W = kernel_weights(_prepare(train, new, sm), kernel)
    return NpPrediction(W @ y, W, kernel.bandwidth)


def _onehot(labels):
    labels = np.asarray(labels)
    classes, codes = np.unique(labels, return_inverse=True)
    Y = np.zeros((labels.size, classes.size))
    Y[np.arange(labels.size), codes] = 1.0
    return classes, Y


def np_classify(train: FunctionalSample, labels, new, kernel: KernelSpec, sm: Optional[Semimetric] = None
                ) -> ClassPrediction:
    """Kernel estimate of the class probabilities; ties go to the lowest class."""
    labels = np.asarray(labels)
    if labels.shape != (train.n,):
        raise DimensionError("need one label per training curve")
    classes, Y = _onehot(labels)
    W = kernel_weights(_prepare(train, new, sm), kernel)
    P = W @ Y
    return ClassPrediction(P, classes, classes[np.argmax(P, axis=1)], W, kernel.bandwidth)


def default_bandwidths(D) -> np.ndarray:
    """Quantiles 0.05, 0.10, ..., 0.95 of the off-diagonal training distances."""
    d = D[np.triu_indices_from(D, k=1)]
    d = d[d > 0]
    if d.size == 0:
        raise DegenerateError("all training curves coincide under the semimetric")
    return np.unique(np.quantile(d, DEFAULT_QUANTILES))


@dataclass
class BandwidthSelection:
    bandwidth: float
    h_grid: np.ndarray
    scores: np.ndarray  # inf marks bandwidths with an empty leave-one-out neighborhood
    task: str


def loo_scores(D, response, kind: str, h_grid, task: str = "regression") -> np.ndarray:
    """Leave-one-out error for each bandwidth given the training distance matrix."""
    n = D.shape[0]
    diag = np.eye(n, dtype=bool)
    if task == "regression":
        y = np.asarray(response, dtype=float)
    else:
        _, Y = _onehot(response)
        truth = np.argmax(Y, axis=1)
    scores = np.empty(len(h_grid))
    for r, h in enumerate(h_grid):
        try:
            W = kernel_weights(D, KernelSpec(kind, float(h)), exclude=diag)
        except NoNeighborsError:
            scores[r] = np.inf
            continue
        if task == "regression":
            scores[r] = float(np.mean((W @ y - y) ** 2))
        else:
            scores[r] = float(np.mean(np.argmax(W @ Y, axis=1) != truth))
    return scores


def loo_cv_bandwidth(train: FunctionalSample, response, kernel: str = "gaussian",
                     sm: Optional[Semimetric] = None, h_grid=None, task: str = "regression"
                     ) -> BandwidthSelection:
    """Bandwidth minimizing the leave-one-out error; ties go to the larger ``h``.

    ``task`` is ``"regression"`` (squared error) or ``"classification"``
    (misclassification rate).
    """
    if task not in ("regression", "classification"):
        raise InputError("task must be 'regression' or 'classification'")
    if train.n < 3:
        raise InsufficientSampleError("leave-one-out bandwidth selection needs n >= 3")
    if np.asarray(response).shape != (train.n,):
        raise DimensionError("need one response per training curve")
    KernelSpec(kernel)  # validate the kind early
    if sm is None:
        sm = Semimetric.fpca_scores(train)
    D = sm.pairwise(train)
    h_grid = default_bandwidths(D) if h_grid is None else np.asarray(h_grid, dtype=float).ravel()
    if h_grid.size == 0 or np.any(~np.isfinite(h_grid)) or np.any(h_grid <= 0):
        raise InputError("bandwidth grid must hold positive finite values")
    scores = loo_scores(D, response, kernel, h_grid, task)
    if not np.any(np.isfinite(scores)):
        raise DegenerateError("every bandwidth leaves some curve without neighbors")
    best = np.min(scores)
    h = float(np.max(h_grid[scores == best]))
    return BandwidthSelection(h, h_grid, scores, task)


@dataclass
class OuterLooResult:
    predictions: np.ndarray  # fitted values (regression) or predicted labels
    bandwidths: np.ndarray
    error: float  # mean squared error or misclassification rate


def outer_loo(train: FunctionalSample, response, kernel: str = "gaussian", semimetric: str = "fpca_scores",
              M: int = DEFAULT_SCORES_M, h_grid=None, task: str = "regression") -> OuterLooResult:
    """Leave-one-out evaluation with the semimetric and bandwidth refit on each fold."""
    n = train.n
    if n < 4:
        raise InsufficientSampleError("outer leave-one-out needs n >= 4")
    response = np.asarray(response)
    preds = []
    hs = np.empty(n)
    for i in range(n):
        keep = np.delete(np.arange(n), i)
        fold = train.subset(keep)
        sm = Semimetric.build(semimetric, fold, M)
        sel = loo_cv_bandwidth(fold, response[keep], kernel, sm, h_grid, task)
        hs[i] = sel.bandwidth
        k = KernelSpec(kernel, sel.bandwidth)
        x = train.values[i : i + 1]
        if task == "regression":
            preds.append(np_regress(fold, response[keep], x, k, sm).values[0])
        else:
            preds.append(np_classify(fold, response[keep], x, k, sm).predicted[0])
    preds = np.array(preds)
    if task == "regression":
        err = float(np.mean((preds - response.astype(float)) ** 2))
    else:
        err = float(np.mean(preds != response))
    return OuterLooResult(preds, hs, err)
