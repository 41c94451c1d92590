"""Tiny static SVG plots (line charts and heatmaps) for quick inspection.

Only a convenience; numbers of record live in the CSV files.
"""
from __future__ import annotations

from html import escape

import numpy as np

W, H = 640, 420
ML, MR, MT, MB = 70, 20, 30, 50
PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"]


def _scale(lo, hi, a, b):
    if hi == lo:
        hi = lo + 1.0
    return lambda v: a + (np.asarray(v, float) - lo) * (b - a) / (hi - lo)


def _frame(title, xlabel, ylabel, xr, yr):
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
           f'font-family="sans-serif" font-size="12">',
           f'<rect width="{W}" height="{H}" fill="white"/>',
           f'<text x="{W / 2}" y="18" text-anchor="middle">{escape(title)}</text>',
           f'<rect x="{ML}" y="{MT}" width="{W - ML - MR}" height="{H - MT - MB}" '
           'fill="none" stroke="black"/>',
           f'<text x="{W / 2}" y="{H - 10}" text-anchor="middle">{escape(xlabel)}</text>',
           f'<text x="15" y="{H / 2}" transform="rotate(-90 15 {H / 2})" '
           f'text-anchor="middle">{escape(ylabel)}</text>']
    for frac in np.linspace(0, 1, 5):
        xv = xr[0] + frac * (xr[1] - xr[0])
        yv = yr[0] + frac * (yr[1] - yr[0])
        px = ML + frac * (W - ML - MR)
        py = H - MB - frac * (H - MT - MB)
        out.append(f'<text x="{px:.1f}" y="{H - MB + 16}" text-anchor="middle">{xv:.3g}</text>')
        out.append(f'<text x="{ML - 6}" y="{py + 4:.1f}" text-anchor="end">{yv:.3g}</text>')
    return out


def line_plot(series: dict, title="", xlabel="", ylabel="", markers=False) -> str:
    """``series`` maps a label to (x, y)."""
    xs = np.concatenate([np.asarray(x, float) for x, _ in series.values()])
    ys = np.concatenate([np.asarray(y, float) for _, y in series.values()])
    ok = np.isfinite(ys)
    xr = (np.nanmin(xs), np.nanmax(xs))
    yr = (np.nanmin(ys[ok]), np.nanmax(ys[ok])) if ok.any() else (0.0, 1.0)
    sx = _scale(*xr, ML, W - MR)
    sy = _scale(*yr, H - MB, MT)
    out = _frame(title, xlabel, ylabel, xr, yr)
    for i, (label, (x, y)) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        x, y = np.asarray(x, float), np.asarray(y, float)
        keep = np.isfinite(y)
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(sx(x[keep]), sy(y[keep])))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        if markers:
            for a, b in zip(sx(x[keep]), sy(y[keep])):
                out.append(f'<circle cx="{a:.2f}" cy="{b:.2f}" r="2.5" fill="{color}"/>')
        out.append(f'<text x="{W - MR - 5}" y="{MT + 15 + 14 * i}" text-anchor="end" '
                   f'fill="{color}">{escape(str(label))}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def heatmap(x, y, z, title="", xlabel="", ylabel="", overlay=None) -> str:
    """z has shape (len(y), len(x)); ``overlay`` is an optional (x, y) curve."""
    x, y, z = np.asarray(x, float), np.asarray(y, float), np.asarray(z, float)
    xr, yr = (x.min(), x.max()), (y.min(), y.max())
    sx = _scale(*xr, ML, W - MR)
    sy = _scale(*yr, H - MB, MT)
    out = _frame(title, xlabel, ylabel, xr, yr)
    zmax = np.nanmax(z) if np.isfinite(z).any() and np.nanmax(z) > 0 else 1.0
    dx = (W - ML - MR) / max(len(x), 1)
    dy = (H - MT - MB) / max(len(y), 1)
    for j, yv in enumerate(y):
        for i, xv in enumerate(x):
            v = z[j, i] / zmax if np.isfinite(z[j, i]) else 0.0
            shade = int(255 * (1 - min(max(v, 0.0), 1.0)))
            out.append(f'<rect x="{sx(xv) - dx / 2:.2f}" y="{sy(yv) - dy / 2:.2f}" '
                       f'width="{dx:.2f}" height="{dy:.2f}" fill="rgb(255,{shade},{shade})"/>')
    if overlay is not None:
        ox, oy = (np.asarray(v, float) for v in overlay)
        keep = (oy >= yr[0]) & (oy <= yr[1])
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(sx(ox[keep]), sy(oy[keep])))
        out.append(f'<polyline fill="none" stroke="black" stroke-dasharray="5,3" points="{pts}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
