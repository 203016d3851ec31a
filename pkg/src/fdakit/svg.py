"""Dependency-free SVG rendering of CLI result documents.

Output is a deterministic function of the result: coordinates are printed
with two decimals and nothing (dates, ids, random colors) varies between
runs. Only data curves and envelopes are drawn as ``<path>`` elements;
frames use ``<rect>`` and scatter points ``<circle>``.
"""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

from .exceptions import InputError

PANEL_W, PANEL_H = 420, 300
MARGIN = 40
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf")
PLOT_KINDS = ("curves", "boxplot", "eigenfunctions", "scores", "warps")
_SOURCES = {
    "curves": ("smooth", "fboxplot", "align"),
    "boxplot": ("fboxplot",),
    "eigenfunctions": ("fpca",),
    "scores": ("fpca", "cluster"),
    "warps": ("align",),
}


class _Panel:
    def __init__(self, index, title, x_range, y_range):
        self.x0 = index * PANEL_W
        self.title = title
        self.xlo, self.xhi = _pad(x_range)
        self.ylo, self.yhi = _pad(y_range)
        self.items = []

    def _xy(self, x, y):
        px = self.x0 + MARGIN + (np.asarray(x) - self.xlo) / (self.xhi - self.xlo) * (PANEL_W - 2 * MARGIN)
        py = PANEL_H - MARGIN - (np.asarray(y) - self.ylo) / (self.yhi - self.ylo) * (PANEL_H - 2 * MARGIN)
        return px, py

    def path(self, x, y, color, width=1.0, dash=None, opacity=1.0):
        px, py = self._xy(x, y)
        d = " ".join(f"{'M' if k == 0 else 'L'}{a:.2f},{b:.2f}" for k, (a, b) in enumerate(zip(px, py)))
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        self.items.append(
            f'<path d="{d}" fill="none" stroke="{color}" stroke-width="{width:g}" '
            f'stroke-opacity="{opacity:g}"{extra}/>'
        )

    def point(self, x, y, color, r=3.0):
        px, py = self._xy(x, y)
        self.items.append(f'<circle cx="{float(px):.2f}" cy="{float(py):.2f}" r="{r:g}" fill="{color}"/>')

    def render(self):
        frame = (
            f'<rect x="{self.x0 + MARGIN}" y="{MARGIN}" width="{PANEL_W - 2 * MARGIN}" '
            f'height="{PANEL_H - 2 * MARGIN}" fill="none" stroke="#444"/>'
        )
        labels = [
            f'<text x="{self.x0 + PANEL_W / 2:.2f}" y="{MARGIN / 2 + 5:.2f}" text-anchor="middle" '
            f'font-size="13">{escape(self.title)}</text>',
            f'<text x="{self.x0 + MARGIN:.2f}" y="{PANEL_H - MARGIN / 2:.2f}" font-size="10">{self.xlo:.3g}</text>',
            f'<text x="{self.x0 + PANEL_W - MARGIN:.2f}" y="{PANEL_H - MARGIN / 2:.2f}" text-anchor="end" '
            f'font-size="10">{self.xhi:.3g}</text>',
            f'<text x="{self.x0 + 4:.2f}" y="{MARGIN + 10:.2f}" font-size="10">{self.yhi:.3g}</text>',
            f'<text x="{self.x0 + 4:.2f}" y="{PANEL_H - MARGIN:.2f}" font-size="10">{self.ylo:.3g}</text>',
        ]
        return [frame, *labels, *self.items]


def _pad(rng):
    lo, hi = float(np.min(rng)), float(np.max(rng))
    if not (np.isfinite(lo) and np.isfinite(hi)):
        raise InputError("cannot plot non-finite values")
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    return lo, hi


def _document(panels):
    width = PANEL_W * len(panels)
    body = [item for p in panels for item in p.render()]
    return "\n".join(
        [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{PANEL_H}" '
            f'viewBox="0 0 {width} {PANEL_H}">',
            f'<rect x="0" y="0" width="{width}" height="{PANEL_H}" fill="white"/>',
            *body,
            "</svg>",
            "",
        ]
    )


def _need(result, *keys):
    for k in keys:
        if k not in result:
            raise InputError(f"result has no {k!r} entry for this plot")
    return [result[k] for k in keys]


def _matrix(values, what):
    X = np.asarray(values, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] == 0:
        raise InputError(f"{what}: nothing to plot (empty sample)")
    return X


def _curves(result):
    grid, curves = _need(result, "grid", "curves")
    t = np.asarray(grid, dtype=float)
    X = _matrix(curves["values"], "curves")
    p = _Panel(0, "curves", t, X)
    for k, row in enumerate(X):
        p.path(t, row, PALETTE[k % len(PALETTE)], opacity=0.8)
    return [p]


def _boxplot(result):
    grid, curves, env = _need(result, "grid", "curves", "envelope")
    t = np.asarray(grid, dtype=float)
    X = _matrix(curves["values"], "boxplot")
    outliers = np.asarray(result.get("outliers", np.zeros(X.shape[0], bool)), dtype=bool)
    median = result.get("median_index", -1)
    bands = [np.asarray(env[k], dtype=float) for k in ("lower", "upper", "lower_fence", "upper_fence")]
    p = _Panel(0, "functional boxplot", t, np.vstack([X, *bands]))
    for k, row in enumerate(X):
        if k == median:
            p.path(t, row, "#000000", width=2.0)
        elif outliers[k]:
            p.path(t, row, PALETTE[1], width=1.2, dash="4,2")
        else:
            p.path(t, row, "#999999", width=0.8, opacity=0.6)
    for band, dash in zip(bands, (None, None, "6,3", "6,3")):
        p.path(t, band, PALETTE[0], width=1.6, dash=dash)
    return [p]


def _eigenfunctions(result):
    grid, efs = _need(result, "grid", "eigenfunctions")
    t = np.asarray(grid, dtype=float)
    Phi = _matrix(efs, "eigenfunctions")
    panels = []
    for m, phi in enumerate(Phi):
        p = _Panel(m, f"eigenfunction {m + 1}", t, phi)
        p.path(t, phi, PALETTE[m % len(PALETTE)], width=1.5)
        panels.append(p)
    return panels


def _scores(result):
    (scores,) = _need(result, "scores")
    S = _matrix(scores, "scores")
    if S.shape[1] < 2:
        S = np.column_stack([S[:, 0], np.zeros(S.shape[0])])
    labels = np.asarray(result.get("labels", np.ones(S.shape[0], dtype=int)))
    p = _Panel(0, "scores (components 1 and 2)", S[:, 0], S[:, 1])
    for (a, b), lab in zip(S[:, :2], labels):
        p.point(a, b, PALETTE[(int(lab) - 1) % len(PALETTE)])
    return [p]


def _warps(result):
    grid, curves, aligned, warps = _need(result, "grid", "curves", "aligned", "warps")
    t = np.asarray(grid, dtype=float)
    X = _matrix(curves["values"], "original curves")
    A = _matrix(aligned, "aligned curves")
    G = _matrix(warps, "warps")
    panels = []
    for idx, (title, M) in enumerate((("original", X), ("aligned", A), ("warping functions", G))):
        p = _Panel(idx, title, t, M)
        for k, row in enumerate(M):
            p.path(t, row, PALETTE[k % len(PALETTE)], opacity=0.8)
        panels.append(p)
    return panels


_RENDERERS = {
    "curves": _curves,
    "boxplot": _boxplot,
    "eigenfunctions": _eigenfunctions,
    "scores": _scores,
    "warps": _warps,
}


def render_svg(result: dict, kind: str) -> str:
    """SVG document for ``kind`` drawn from a CLI result document."""
    if kind not in _RENDERERS:
        raise InputError(f"unknown plot kind {kind!r}; choose from {', '.join(PLOT_KINDS)}")
    source = result.get("manifest", {}).get("subcommand")
    if source is not None and source not in _SOURCES[kind]:
        raise InputError(f"a {kind!r} plot cannot be drawn from a {source!r} result")
    return _document(_RENDERERS[kind](result))
