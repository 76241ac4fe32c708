"""Minimal deterministic SVG plotting.

Hand-rolled on purpose: the output contains nothing but the data (no
timestamps, library versions or random ids), so re-running a pipeline with
the same inputs yields byte-identical plot files.  Only what the CLI needs:
a multi-series line plot and a heatmap.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

_WIDTH = 640
_HEIGHT = 480
_MARGIN_L = 70
_MARGIN_R = 20
_MARGIN_T = 40
_MARGIN_B = 50

_SERIES_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                  "#8c564b")


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def _ticks(lo: float, hi: float, n: int = 5) -> "list[float]":
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10.0 ** np.floor(np.log10(raw))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        if raw <= mult * mag:
            step = mult * mag
            break
    first = np.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + step * 1e-9:
        ticks.append(float(t))
        t += step
    return ticks


class _Svg:
    def __init__(self, width: int, height: int):
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
            f'height="{height}" viewBox="0 0 {width} {height}">',
            f'<rect width="{width}" height="{height}" fill="white"/>',
        ]

    def line(self, x1, y1, x2, y2, color="#000000", width=1.0):
        self.parts.append(
            f'<line x1="{_fmt(x1)}" y1="{_fmt(y1)}" x2="{_fmt(x2)}" '
            f'y2="{_fmt(y2)}" stroke="{color}" stroke-width="{_fmt(width)}"/>')

    def polyline(self, points, color, width=1.5):
        pts = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in points)
        self.parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" '
            f'stroke-width="{_fmt(width)}"/>')

    def rect(self, x, y, w, h, fill):
        self.parts.append(
            f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(w)}" '
            f'height="{_fmt(h)}" fill="{fill}"/>')

    def text(self, x, y, s, size=12, anchor="middle", rotate=None):
        transform = (f' transform="rotate(-90 {_fmt(x)} {_fmt(y)})"'
                     if rotate else "")
        self.parts.append(
            f'<text x="{_fmt(x)}" y="{_fmt(y)}" font-family="sans-serif" '
            f'font-size="{size}" text-anchor="{anchor}"{transform}>{s}</text>')

    def write(self, path) -> Path:
        path = Path(path)
        path.write_text("\n".join(self.parts + ["</svg>"]) + "\n",
                        encoding="utf-8")
        return path


def line_plot(path, xs, series, title: str, xlabel: str, ylabel: str) -> Path:
    """Line plot of (label, ys) series over shared xs."""
    xs = np.asarray(xs, dtype=np.float64)
    if len(series) == 0 or len(xs) == 0:
        raise ValueError("nothing to plot")
    all_ys = np.concatenate([np.asarray(ys, dtype=np.float64)
                             for _, ys in series])
    x_lo, x_hi = float(xs.min()), float(xs.max())
    y_lo, y_hi = float(all_ys.min()), float(all_ys.max())
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    pad = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad

    plot_w = _WIDTH - _MARGIN_L - _MARGIN_R
    plot_h = _HEIGHT - _MARGIN_T - _MARGIN_B

    def sx(v):
        return _MARGIN_L + (v - x_lo) / (x_hi - x_lo) * plot_w

    def sy(v):
        return _MARGIN_T + (1.0 - (v - y_lo) / (y_hi - y_lo)) * plot_h

    svg = _Svg(_WIDTH, _HEIGHT)
    svg.line(_MARGIN_L, _MARGIN_T, _MARGIN_L, _HEIGHT - _MARGIN_B)
    svg.line(_MARGIN_L, _HEIGHT - _MARGIN_B, _WIDTH - _MARGIN_R,
             _HEIGHT - _MARGIN_B)
    for t in _ticks(x_lo, x_hi):
        svg.line(sx(t), _HEIGHT - _MARGIN_B, sx(t), _HEIGHT - _MARGIN_B + 4)
        svg.text(sx(t), _HEIGHT - _MARGIN_B + 18, _fmt(t), size=10)
    for t in _ticks(y_lo, y_hi):
        svg.line(_MARGIN_L - 4, sy(t), _MARGIN_L, sy(t))
        svg.text(_MARGIN_L - 8, sy(t) + 3, _fmt(t), size=10, anchor="end")
    for i, (label, ys) in enumerate(series):
        color = _SERIES_COLORS[i % len(_SERIES_COLORS)]
        ys = np.asarray(ys, dtype=np.float64)
        svg.polyline([(sx(x), sy(y)) for x, y in zip(xs, ys)], color)
        svg.text(_WIDTH - _MARGIN_R - 4, _MARGIN_T + 14 + 16 * i, label,
                 size=11, anchor="end")
        svg.line(_WIDTH - _MARGIN_R - 90, _MARGIN_T + 10 + 16 * i,
                 _WIDTH - _MARGIN_R - 70, _MARGIN_T + 10 + 16 * i,
                 color=color, width=2.0)
    svg.text(_WIDTH / 2, 20, title, size=14)
    svg.text(_WIDTH / 2, _HEIGHT - 12, xlabel, size=12)
    svg.text(16, _HEIGHT / 2, ylabel, size=12, rotate=True)
    return svg.write(path)


_HEAT_STOPS = np.array([
    [0.267, 0.005, 0.329],
    [0.283, 0.141, 0.458],
    [0.254, 0.265, 0.530],
    [0.207, 0.372, 0.553],
    [0.164, 0.471, 0.558],
    [0.128, 0.567, 0.551],
    [0.135, 0.659, 0.518],
    [0.267, 0.749, 0.441],
    [0.478, 0.821, 0.318],
    [0.741, 0.873, 0.150],
    [0.993, 0.906, 0.144],
])


def _heat_color(v: float) -> str:
    v = min(max(v, 0.0), 1.0)
    pos = v * (len(_HEAT_STOPS) - 1)
    i = min(int(pos), len(_HEAT_STOPS) - 2)
    frac = pos - i
    rgb = _HEAT_STOPS[i] * (1 - frac) + _HEAT_STOPS[i + 1] * frac
    r, g, b = (int(round(255 * c)) for c in rgb)
    return f"#{r:02x}{g:02x}{b:02x}"


def heatmap(path, values, title: str, xlabel: str, ylabel: str,
            x_extent=None, y_extent=None) -> Path:
    """Heatmap of a 2D array, row 0 at the bottom."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2 or values.size == 0:
        raise ValueError("heatmap needs a non-empty 2D array")
    rows, cols = values.shape
    lo, hi = float(values.min()), float(values.max())
    span = (hi - lo) if hi > lo else 1.0

    plot_w = _WIDTH - _MARGIN_L - _MARGIN_R
    plot_h = _HEIGHT - _MARGIN_T - _MARGIN_B
    cell_w = plot_w / cols
    cell_h = plot_h / rows

    svg = _Svg(_WIDTH, _HEIGHT)
    for r in range(rows):
        y = _MARGIN_T + plot_h - (r + 1) * cell_h
        for c in range(cols):
            svg.rect(_MARGIN_L + c * cell_w, y, cell_w + 0.5, cell_h + 0.5,
                     _heat_color((values[r, c] - lo) / span))
    svg.text(_WIDTH / 2, 20, title, size=14)
    svg.text(_WIDTH / 2, _HEIGHT - 12, xlabel, size=12)
    svg.text(16, _HEIGHT / 2, ylabel, size=12, rotate=True)
    if x_extent is not None:
        svg.text(_MARGIN_L, _HEIGHT - _MARGIN_B + 18, _fmt(x_extent[0]),
                 size=10)
        svg.text(_WIDTH - _MARGIN_R, _HEIGHT - _MARGIN_B + 18,
                 _fmt(x_extent[1]), size=10)
    if y_extent is not None:
        svg.text(_MARGIN_L - 8, _HEIGHT - _MARGIN_B, _fmt(y_extent[0]),
                 size=10, anchor="end")
        svg.text(_MARGIN_L - 8, _MARGIN_T + 10, _fmt(y_extent[1]), size=10,
                 anchor="end")
    return svg.write(path)
