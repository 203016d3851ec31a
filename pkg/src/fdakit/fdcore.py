"""Data model for dense and sparse functional samples plus L2 numerics.

All curve values live on a :class:`Grid` that carries trapezoid quadrature
weights, so ``inner_product`` and ``l2_distance`` are exact for the
piecewise-linear interpolants the grid defines.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .exceptions import DimensionError, InputError, InvalidGridError


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


def trapezoid_weights(points) -> np.ndarray:
    """Trapezoid-rule quadrature weights for an ascending grid.

    Examples
    --------
    >>> trapezoid_weights([0.0, 0.5, 1.0])
    array([0.25, 0.5 , 0.25])
    """
    t = np.asarray(points, dtype=float)
    if t.ndim != 1 or t.size < 2:
        raise InvalidGridError("a grid needs at least 2 points")
    if not np.all(np.isfinite(t)):
        raise InvalidGridError("grid points must be finite")
    dt = np.diff(t)
    if np.any(dt <= 0):
        bad = int(np.flatnonzero(dt <= 0)[0])
        raise InvalidGridError(
            f"grid points must be strictly increasing (t[{bad}]={t[bad]!r}, "
            f"t[{bad + 1}]={t[bad + 1]!r})"
        )
    w = np.empty_like(t)
    w[0] = dt[0] / 2
    w[-1] = dt[-1] / 2
    w[1:-1] = (t[2:] - t[:-2]) / 2
    return w


@dataclass(frozen=True)
class Grid:
    """Evaluation points ``t_1 < ... < t_V`` with quadrature weights."""

    points: np.ndarray
    weights: np.ndarray = field(default=None)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        w = trapezoid_weights(pts)
        if self.weights is not None:
            w_given = np.asarray(self.weights, dtype=float)
            if w_given.shape != pts.shape:
                raise DimensionError("weights and points differ in length")
            if np.any(w_given <= 0):
                raise InvalidGridError("quadrature weights must be positive")
            if abs(w_given.sum() - (pts[-1] - pts[0])) > 1e-10:
                raise InvalidGridError("quadrature weights must sum to b - a")
            w = w_given
        object.__setattr__(self, "points", _frozen(pts))
        object.__setattr__(self, "weights", _frozen(w))

    @classmethod
    def linspace(cls, a: float, b: float, n: int) -> "Grid":
        return cls(np.linspace(a, b, n))

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.points[0]), float(self.points[-1])

    def __len__(self) -> int:
        return self.points.size

    def __eq__(self, other):
        if not isinstance(other, Grid):
            return NotImplemented
        return np.array_equal(self.points, other.points) and np.array_equal(
            self.weights, other.weights
        )

    def __hash__(self):
        return hash(self.points.tobytes())


def inner_product(f, g, grid: Grid):
    """L2 inner product ``sum_v w_v f(t_v) g(t_v)``.

    ``f`` and ``g`` may be stacks of curves (last axis is the grid); the
    usual broadcasting rules apply.
    """
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    V = len(grid)
    if f.shape[-1] != V or g.shape[-1] != V:
        raise DimensionError(
            f"curve lengths {f.shape[-1]} and {g.shape[-1]} do not match grid length {V}"
        )
    return np.sum(f * g * grid.weights, axis=-1)


def l2_norm(f, grid: Grid):
    return np.sqrt(np.maximum(inner_product(f, f, grid), 0.0))


def l2_distance(f, g, grid: Grid):
    """L2 distance between curves on a common grid."""
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    return l2_norm(f - g, grid)


def derivative(values, grid: Grid) -> np.ndarray:
    """Central differences in the interior, one-sided at the endpoints."""
    x = np.asarray(values, dtype=float)
    t = grid.points
    d = np.empty_like(x)
    d[..., 1:-1] = (x[..., 2:] - x[..., :-2]) / (t[2:] - t[:-2])
    d[..., 0] = (x[..., 1] - x[..., 0]) / (t[1] - t[0])
    d[..., -1] = (x[..., -1] - x[..., -2]) / (t[-1] - t[-2])
    return d


@dataclass(frozen=True)
class FunctionalSample:
    """``n`` curves observed on a shared grid (row ``i`` is curve ``i``)."""

    grid: Grid
    values: np.ndarray
    curve_ids: tuple = None

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[None, :]
        if vals.ndim != 2 or vals.shape[0] < 1:
            raise DimensionError("values must be an n x V matrix with n >= 1")
        if vals.shape[1] != len(self.grid):
            raise DimensionError(
                f"values have {vals.shape[1]} columns but the grid has {len(self.grid)} points"
            )
        if not np.all(np.isfinite(vals)):
            r, c = np.argwhere(~np.isfinite(vals))[0]
            raise InputError(f"non-finite value in curve {r} at grid index {c}")
        ids = self.curve_ids
        if ids is None:
            ids = tuple(str(i + 1) for i in range(vals.shape[0]))
        ids = tuple(ids)
        if len(ids) != vals.shape[0]:
            raise DimensionError("curve_ids length differs from number of curves")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "curve_ids", ids)

    @classmethod
    def from_arrays(cls, points, values, curve_ids=None) -> "FunctionalSample":
        return cls(Grid(points), values, curve_ids)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def __len__(self) -> int:
        return self.n

    def subset(self, index) -> "FunctionalSample":
        index = np.asarray(index)
        if index.dtype == bool:
            index = np.flatnonzero(index)
        return FunctionalSample(
            self.grid, self.values[index], tuple(self.curve_ids[i] for i in index)
        )

    def with_values(self, values) -> "FunctionalSample":
        return FunctionalSample(self.grid, values, self.curve_ids)


@dataclass(frozen=True)
class SparseFunctionalSample:
    """Curves observed at curve-specific points ``t_i1 < ... < t_iL_i``."""

    domain: tuple
    times: tuple
    values: tuple
    curve_ids: tuple = None

    def __post_init__(self):
        a, b = (float(self.domain[0]), float(self.domain[1]))
        if not b > a:
            raise InvalidGridError("domain must satisfy a < b")
        if len(self.times) != len(self.values):
            raise DimensionError("times and values differ in number of curves")
        if len(self.times) < 1:
            raise InputError("a sparse sample needs at least one curve")
        ts, xs = [], []
        for i, (t, x) in enumerate(zip(self.times, self.values)):
            t = _frozen(np.ravel(t))
            x = _frozen(np.ravel(x))
            if t.size < 1 or t.size != x.size:
                raise DimensionError(f"curve {i}: need matching, nonempty times and values")
            if not (np.all(np.isfinite(t)) and np.all(np.isfinite(x))):
                raise InputError(f"curve {i}: non-finite entries")
            if np.any(np.diff(t) <= 0):
                raise InvalidGridError(f"curve {i}: observation times must be strictly increasing")
            if t[0] < a or t[-1] > b:
                raise InvalidGridError(f"curve {i}: observation times outside [{a}, {b}]")
            ts.append(t)
            xs.append(x)
        ids = self.curve_ids
        if ids is None:
            ids = tuple(str(i + 1) for i in range(len(ts)))
        if len(ids) != len(ts):
            raise DimensionError("curve_ids length differs from number of curves")
        object.__setattr__(self, "domain", (a, b))
        object.__setattr__(self, "times", tuple(ts))
        object.__setattr__(self, "values", tuple(xs))
        object.__setattr__(self, "curve_ids", tuple(ids))

    @property
    def n(self) -> int:
        return len(self.times)

    def __len__(self) -> int:
        return self.n

    @property
    def counts(self) -> np.ndarray:
        return np.array([t.size for t in self.times])

    def pooled(self) -> tuple[np.ndarray, np.ndarray]:
        """All ``(t, x)`` observations stacked, curve by curve."""
        return np.concatenate(self.times), np.concatenate(self.values)

    def largest_gap(self) -> float:
        a, b = self.domain
        pts = np.unique(np.concatenate([[a], *self.times, [b]]))
        return float(np.max(np.diff(pts)))

    def check_coverage(self) -> None:
        """Raise unless the pooled design has no gap of ``(b - a) / 4`` or more."""
        a, b = self.domain
        gap = self.largest_gap()
        if gap >= (b - a) / 4:
            raise InputError(
                f"pooled observation points leave a gap of {gap:.4g}, "
                f"which is not below (b - a)/4 = {(b - a) / 4:.4g}"
            )

    @classmethod
    def from_dense(cls, sample: FunctionalSample) -> "SparseFunctionalSample":
        t = sample.grid.points
        return cls(
            sample.grid.domain,
            tuple(t for _ in range(sample.n)),
            tuple(row for row in sample.values),
            sample.curve_ids,
        )

    def to_dense(self) -> FunctionalSample:
        """Dense view when every curve shares the same observation points."""
        t0 = self.times[0]
        for i, t in enumerate(self.times[1:], start=1):
            if t.shape != t0.shape or not np.array_equal(t, t0):
                raise InputError(f"curve {i} is observed on a different grid than curve 0")
        return FunctionalSample(Grid(t0), np.vstack(self.values), self.curve_ids)


def as_grid(grid_or_points) -> Grid:
    if isinstance(grid_or_points, Grid):
        return grid_or_points
    return Grid(grid_or_points)


def stack_curves(curves: Sequence, grid: Grid) -> np.ndarray:
    arr = np.asarray(curves, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.shape[-1] != len(grid):
        raise DimensionError("curves do not match the grid")
    return arr
