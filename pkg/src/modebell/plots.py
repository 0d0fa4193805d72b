"""Minimal static SVG renderings (line charts and heatmaps)."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

W, H = 640, 420
ML, MR, MT, MB = 70, 110, 40, 55


def _frame(title, xlabel, ylabel, x0, x1, y0, y1):
    pw, ph = W - ML - MR, H - MT - MB
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">',
           f'<rect width="{W}" height="{H}" fill="white"/>',
           f'<text x="{W / 2}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
           f'<rect x="{ML}" y="{MT}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
           f'<text x="{ML + pw / 2}" y="{H - 12}" text-anchor="middle">{escape(xlabel)}</text>',
           f'<text x="16" y="{MT + ph / 2}" text-anchor="middle" transform="rotate(-90 16 {MT + ph / 2})">'
           f'{escape(ylabel)}</text>']
    for k in range(5):
        fx = x0 + (x1 - x0) * k / 4
        fy = y0 + (y1 - y0) * k / 4
        px = ML + pw * k / 4
        py = MT + ph * (1 - k / 4)
        out.append(f'<text x="{px}" y="{MT + ph + 16}" text-anchor="middle">{fx:.4g}</text>')
        out.append(f'<text x="{ML - 6}" y="{py + 4}" text-anchor="end">{fy:.4g}</text>')
    return out, pw, ph


def line_plot(path, series: dict, title="", xlabel="", ylabel="", hlines=()):
    """``series`` maps a label to ``(x, y)``; NaN points break the line."""
    xs = np.concatenate([np.asarray(x, float) for x, _ in series.values()])
    ys = np.concatenate([np.asarray(y, float) for _, y in series.values()] + [np.asarray(hlines, float)])
    ys = ys[np.isfinite(ys)]
    x0, x1 = float(np.min(xs)), float(np.max(xs))
    y0, y1 = (float(np.min(ys)), float(np.max(ys))) if ys.size else (0.0, 1.0)
    if x1 == x0:
        x1 = x0 + 1
    pad = 0.05 * (y1 - y0 or 1)
    y0, y1 = y0 - pad, y1 + pad
    out, pw, ph = _frame(title, xlabel, ylabel, x0, x1, y0, y1)

    def px(x):
        return ML + pw * (x - x0) / (x1 - x0)

    def py(y):
        return MT + ph * (1 - (y - y0) / (y1 - y0))

    for h in hlines:
        out.append(f'<line x1="{ML}" x2="{ML + pw}" y1="{py(h):.2f}" y2="{py(h):.2f}" stroke="gray" '
                   'stroke-dasharray="4 3"/>')
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"]
    for n, (label, (x, y)) in enumerate(series.items()):
        c = colors[n % len(colors)]
        pts, segs = [], []
        for a, b in zip(np.asarray(x, float), np.asarray(y, float)):
            if math.isfinite(b):
                pts.append(f"{px(a):.2f},{py(b):.2f}")
            elif pts:
                segs.append(pts)
                pts = []
        if pts:
            segs.append(pts)
        for s in segs:
            out.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{" ".join(s)}"/>')
        out.append(f'<text x="{ML + pw + 8}" y="{MT + 14 + 16 * n}" fill="{c}">{escape(str(label))}</text>')
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out))


def _color(t: float) -> str:
    """Blue-white-red diverging map for ``t`` in [0, 1]; grey for NaN."""
    if not math.isfinite(t):
        return "#bbbbbb"
    t = min(max(t, 0.0), 1.0)
    if t < 0.5:
        s = t / 0.5
        r, g, b = int(40 + 215 * s), int(80 + 175 * s), 255
    else:
        s = (t - 0.5) / 0.5
        r, g, b = 255, int(255 - 175 * s), int(255 - 215 * s)
    return f"#{r:02x}{g:02x}{b:02x}"


def heatmap(path, matrix, x, y, title="", xlabel="", ylabel="", vmin=None, vmax=None, max_cells=160):
    """``matrix[i, j]`` drawn at ``(x[j], y[i])``; downsampled to ``max_cells``."""
    m = np.asarray(matrix, float)
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    si = max(1, math.ceil(m.shape[0] / max_cells))
    sj = max(1, math.ceil(m.shape[1] / max_cells))
    m, x, y = m[::si, ::sj], x[::sj], y[::si]
    fin = m[np.isfinite(m)]
    lo = float(fin.min()) if vmin is None and fin.size else (vmin if vmin is not None else 0.0)
    hi = float(fin.max()) if vmax is None and fin.size else (vmax if vmax is not None else 1.0)
    if hi == lo:
        hi = lo + 1
    out, pw, ph = _frame(title, xlabel, ylabel, x[0], x[-1], y[0], y[-1])
    cw, chh = pw / m.shape[1], ph / m.shape[0]
    for i in range(m.shape[0]):
        for j in range(m.shape[1]):
            out.append(f'<rect x="{ML + j * cw:.2f}" y="{MT + ph - (i + 1) * chh:.2f}" width="{cw + 0.3:.2f}" '
                       f'height="{chh + 0.3:.2f}" fill="{_color((m[i, j] - lo) / (hi - lo))}"/>')
    for k in range(11):
        t = k / 10
        out.append(f'<rect x="{W - MR + 20}" y="{MT + ph * (1 - t) - ph / 11:.2f}" width="16" '
                   f'height="{ph / 11 + 0.5:.2f}" fill="{_color(t)}"/>')
    out.append(f'<text x="{W - MR + 40}" y="{MT + 10}">{hi:.3g}</text>')
    out.append(f'<text x="{W - MR + 40}" y="{MT + ph}">{lo:.3g}</text>')
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out))
