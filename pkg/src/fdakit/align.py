"""Elastic alignment with the square-root-velocity transform.

Warps are found by dynamic programming over a ``V x V`` lattice of grid
indices. A path step moves ``di`` grid points along the target axis and
``dj`` along the warped axis with ``1 <= di, dj <= slope_cap`` (coprime
pairs), so every warp is piecewise linear, strictly increasing and has
slopes in ``[1/slope_cap, slope_cap]``.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .exceptions import DimensionError, InputError, InsufficientSampleError
from .fdcore import FunctionalSample, Grid, derivative

SLOPE_CAP = 5


@dataclass(frozen=True)
class SrvfCurve:
    grid: Grid
    q: np.ndarray


@dataclass(frozen=True)
class WarpFunction:
    grid: Grid
    gamma: np.ndarray

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.gamma) / np.diff(self.grid.points)


@dataclass
class AlignmentResult:
    aligned: FunctionalSample
    warps: list
    mean: np.ndarray  # elastic mean, integrated back from the mean SRVF
    mean_srvf: np.ndarray
    costs: list
    converged: bool
    n_iter: int
    warp_costs: np.ndarray = field(default=None)


def srvf_values(values, grid: Grid) -> np.ndarray:
    if len(grid) < 3:
        raise InputError("the SRVF needs at least 3 grid points")
    d = derivative(values, grid)
    return np.sign(d) * np.sqrt(np.abs(d))


def srvf(curve, grid: Grid) -> SrvfCurve:
    """``Q(x) = x' / sqrt(|x'|)`` (0 where ``x' = 0``) by finite differences."""
    x = np.asarray(curve, dtype=float)
    if x.shape != (len(grid),):
        raise DimensionError("curve length does not match the grid")
    return SrvfCurve(grid, srvf_values(x, grid))


def srvf_to_curve(q, grid: Grid, start: float = 0.0) -> np.ndarray:
    """Invert the SRVF: ``x(t) = start + int_a^t q|q| ds`` (trapezoid)."""
    v = np.asarray(q) * np.abs(q)
    inc = np.diff(grid.points) * (v[1:] + v[:-1]) / 2
    return start + np.concatenate([[0.0], np.cumsum(inc)])


def _moves(cap: int):
    moves = [(i, j) for i in range(1, cap + 1) for j in range(1, cap + 1) if math.gcd(i, j) == 1]
    moves.sort(key=lambda m: (m != (1, 1), m))
    return moves


def _segment_weights(t, k0, di):
    """Trapezoid weights for the sub-points of all segments starting at ``k0``."""
    seg = t[k0[:, None] + np.arange(di + 1)[None, :]]
    h = np.diff(seg, axis=1)
    w = np.zeros_like(seg)
    w[:, :-1] += h / 2
    w[:, 1:] += h / 2
    return seg, w


def _edge_costs(f1, f2, t, di, dj, srvf_action):
    """Cost of every lattice edge ``(k, l) -> (k + di, l + dj)``.

    The warped function on the edge is ``f1(gamma(t)) * sqrt(slope)`` for the
    SRVF action and ``f1(gamma(t))`` for plain composition, evaluated at the
    grid points ``t_k .. t_{k+di}`` and integrated by the trapezoid rule.
    """
    V = t.size
    k = np.arange(V - di)
    l = np.arange(V - dj)
    seg, w = _segment_weights(t, k, di)
    frac = (seg - seg[:, :1]) / (seg[:, -1:] - seg[:, :1])  # (nk, di+1)
    s0 = t[l]
    s1 = t[l + dj]
    gam = s0[None, :, None] + (s1 - s0)[None, :, None] * frac[:, None, :]  # (nk, nl, di+1)
    vals = np.interp(gam, t, f1)
    if srvf_action:
        slope = (s1 - s0)[None, :] / (seg[:, -1] - seg[:, 0])[:, None]
        vals = vals * np.sqrt(slope)[:, :, None]
    target = f2[k[:, None] + np.arange(di + 1)[None, :]]  # (nk, di+1)
    return np.sum(w[:, None, :] * (vals - target[:, None, :]) ** 2, axis=2)


def _dp_warp(f1, f2, grid: Grid, slope_cap: int, srvf_action: bool):
    t = grid.points
    V = t.size
    moves = _moves(slope_cap)
    edges = {m: _edge_costs(f1, f2, t, m[0], m[1], srvf_action) for m in moves}
    cost = np.full((V, V), np.inf)
    back = np.full((V, V), -1, dtype=np.int64)
    cost[0, 0] = 0.0
    for i in range(1, V):
        row = cost[i]
        brow = back[i]
        for mi, (di, dj) in enumerate(moves):
            if di > i:
                continue
            prev = cost[i - di, : V - dj]
            cand = prev + edges[(di, dj)][i - di]
            better = cand < row[dj:]
            if np.any(better):
                idx = np.flatnonzero(better) + dj
                row[idx] = cand[better]
                brow[idx] = mi
    if not np.isfinite(cost[-1, -1]):
        raise InputError("no admissible warp: increase the slope cap")
    # backtrack
    path_i, path_j = [V - 1], [V - 1]
    i = j = V - 1
    while i > 0 or j > 0:
        di, dj = moves[back[i, j]]
        i, j = i - di, j - dj
        path_i.append(i)
        path_j.append(j)
    path_i = np.array(path_i[::-1])
    path_j = np.array(path_j[::-1])
    gamma = np.interp(t, t[path_i], t[path_j])
    gamma[0], gamma[-1] = t[0], t[-1]
    return gamma, float(cost[-1, -1]), (path_i, path_j)


def _check_same_grid(g1: Grid, g2: Grid):
    if g1 != g2:
        raise DimensionError("curves must share the same grid")


def optimal_warp(q1: SrvfCurve, q2: SrvfCurve, slope_cap: int = SLOPE_CAP):
    """Warp ``gamma`` minimizing ``||(q1 o gamma) sqrt(gamma') - q2||^2``.

    Returns ``(WarpFunction, cost)`` with the dynamic-programming optimum.
    """
    _check_same_grid(q1.grid, q2.grid)
    gamma, cost, _ = _dp_warp(q1.q, q2.q, q1.grid, slope_cap, True)
    return WarpFunction(q1.grid, gamma), cost


def l2_warp(x1, x2, grid: Grid, slope_cap: int = SLOPE_CAP):
    """Warp minimizing the raw ``||x1 o gamma - x2||^2`` (prone to pinching)."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if x1.shape != (len(grid),) or x2.shape != (len(grid),):
        raise DimensionError("curves must match the grid")
    gamma, cost, _ = _dp_warp(x1, x2, grid, slope_cap, False)
    return WarpFunction(grid, gamma), cost


def elastic_distance(x1, x2, grid: Grid, slope_cap: int = SLOPE_CAP) -> float:
    """Elastic distance, symmetrized by the smaller of the two warp directions."""
    q1 = srvf(x1, grid)
    q2 = srvf(x2, grid)
    _, c12 = optimal_warp(q1, q2, slope_cap)
    _, c21 = optimal_warp(q2, q1, slope_cap)
    return float(np.sqrt(max(min(c12, c21), 0.0)))


def compose(x, gamma, grid: Grid) -> np.ndarray:
    """``x o gamma`` by linear interpolation of ``x`` on the grid."""
    return np.interp(gamma, grid.points, x)


def invert_warp(gamma, grid: Grid) -> np.ndarray:
    return np.interp(grid.points, gamma, grid.points)


def _warped_srvf(q, path, grid: Grid) -> np.ndarray:
    """Warped SRVF ``(q o gamma) sqrt(gamma')`` matching the DP discretization.

    Inside a path segment the value uses that segment's slope; at a path node
    the two adjacent segment values are averaged with their half-interval
    weights, so the quadrature of ``(result - m)^2`` reproduces the DP cost up
    to a term that does not depend on ``m``.
    """
    t = grid.points
    V = t.size
    path_i, path_j = path
    acc = np.zeros(V)
    wsum = np.zeros(V)
    for a in range(path_i.size - 1):
        k, i = path_i[a], path_i[a + 1]
        l, j = path_j[a], path_j[a + 1]
        seg = t[k : i + 1]
        slope = (t[j] - t[l]) / (t[i] - t[k])
        gam = t[l] + slope * (seg - t[k])
        vals = np.interp(gam, t, q) * np.sqrt(slope)
        h = np.diff(seg)
        w = np.zeros(seg.size)
        w[:-1] += h / 2
        w[1:] += h / 2
        acc[k : i + 1] += w * vals
        wsum[k : i + 1] += w
    return acc / wsum


def _map(fn, items, threads):
    if threads is None or threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def align_to_mean(
    sample: FunctionalSample,
    max_iter: int = 20,
    tol: float = 1e-4,
    slope_cap: int = SLOPE_CAP,
    threads: Optional[int] = None,
) -> AlignmentResult:
    """Iteratively align every curve to the elastic (SRVF) mean.

    Each iteration warps all SRVFs to the current template and replaces the
    template by the mean of the warped SRVFs, which never increases the total
    alignment cost. On exit the warps are centered so their pointwise mean
    is the identity. Hitting ``max_iter`` sets ``converged=False`` and emits
    a warning instead of raising.
    """
    n = sample.n
    if n < 2:
        raise InsufficientSampleError("alignment needs at least 2 curves")
    grid = sample.grid
    X = sample.values
    Q = srvf_values(X, grid)
    template = Q.mean(axis=0)
    costs = []
    converged = False
    best = None

    def one(i):
        gamma, cost, path = _dp_warp(Q[i], template, grid, slope_cap, True)
        return gamma, cost, path

    it = 0
    for it in range(1, max_iter + 1):
        res = _map(one, range(n), threads)
        total = float(sum(r[1] for r in res))
        costs.append(total)
        if best is None or total <= best[0]:
            best = (total, [r[0] for r in res], np.array([r[1] for r in res]), template)
        warped = np.array([_warped_srvf(Q[i], res[i][2], grid) for i in range(n)])
        new_template = warped.mean(axis=0)
        if len(costs) >= 2:
            prev = costs[-2]
            rel = abs(prev - total) / max(abs(prev), 1e-300)
            if rel < tol:
                converged = True
                break
        if total == 0.0:
            converged = True
            break
        template = new_template
    if not converged:
        warnings.warn(
            f"elastic alignment did not converge within {max_iter} iterations",
            RuntimeWarning,
            stacklevel=2,
        )
    _, gammas, warp_costs, template = best
    gammas = np.array(gammas)
    # center: gamma_i <- gamma_i o (mean gamma)^{-1}
    gbar = gammas.mean(axis=0)
    ginv = invert_warp(gbar, grid)
    centered = np.array([np.interp(ginv, grid.points, g) for g in gammas])
    centered[:, 0], centered[:, -1] = grid.points[0], grid.points[-1]
    aligned = np.array([compose(X[i], centered[i], grid) for i in range(n)])
    mean_q = srvf_values(aligned, grid).mean(axis=0)
    mean_curve = srvf_to_curve(mean_q, grid, start=float(aligned[:, 0].mean()))
    warps = [WarpFunction(grid, g) for g in centered]
    return AlignmentResult(
        aligned=sample.with_values(aligned),
        warps=warps,
        mean=mean_curve,
        mean_srvf=mean_q,
        costs=costs,
        converged=converged,
        n_iter=it,
        warp_costs=warp_costs,
    )
