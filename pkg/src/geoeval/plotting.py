"""Dependency-free SVG scatter plots.

Output is text-stable: fixed number formatting, no timestamps, series in a
fixed order, so identical inputs give identical bytes.
"""

from __future__ import annotations

import math
from pathlib import Path
from xml.sax.saxutils import escape

from .metrics import CV_METHODS

COLORS = {
    "rdm": "#1f77b4",
    "blk": "#2ca02c",
    "sp": "#d62728",
    "actual": "#111111",
}
LABELS = {"rdm": "RDM-CV", "blk": "BLK-CV", "sp": "SP-CV", "actual": "actual"}

W, H = 640, 420
ML, MR, MT, MB = 70, 130, 30, 55


def _f(v: float) -> str:
    return f"{v:.2f}"


def _nice_ticks(lo, hi, n=5):
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.floor(lo / step) * step
    ticks = []
    t = start
    while t <= hi + 1e-9 * step:
        ticks.append(round(t, 10))
        t += step
    return ticks


def scatter_svg(series, xlabel: str, ylabel: str, title: str = "", x_range=(0.0, 100.0),
                zero_line: bool = True) -> str:
    """Render ``series`` (ordered list of ``(key, xs, ys)``) as an SVG document string."""
    ys_all = [y for _, _, ys in series for y in ys]
    if not ys_all:
        raise ValueError("nothing to plot")
    ylo, yhi = min(ys_all), max(ys_all)
    if zero_line:
        ylo, yhi = min(ylo, 0.0), max(yhi, 0.0)
    pad = 0.05 * (yhi - ylo) if yhi > ylo else 1.0
    ylo, yhi = ylo - pad, yhi + pad
    xlo, xhi = x_range
    pw, ph = W - ML - MR, H - MT - MB

    def px(x):
        return ML + (x - xlo) / (xhi - xlo) * pw

    def py(y):
        return MT + (yhi - y) / (yhi - ylo) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
    ]
    if title:
        out.append(f'<text x="{W / 2:.1f}" y="18" text-anchor="middle" font-size="14">{escape(title)}</text>')
    out.append(f'<g id="axes" stroke="black" fill="none">'
               f'<line x1="{ML}" y1="{MT + ph}" x2="{ML + pw}" y2="{MT + ph}"/>'
               f'<line x1="{ML}" y1="{MT}" x2="{ML}" y2="{MT + ph}"/></g>')
    ticks = ['<g id="ticks" font-size="11">']
    for t in _nice_ticks(xlo, xhi):
        if xlo <= t <= xhi:
            ticks.append(f'<line x1="{_f(px(t))}" y1="{MT + ph}" x2="{_f(px(t))}" y2="{MT + ph + 5}" stroke="black"/>'
                         f'<text x="{_f(px(t))}" y="{MT + ph + 18}" text-anchor="middle">{t:g}</text>')
    for t in _nice_ticks(ylo, yhi):
        if ylo <= t <= yhi:
            ticks.append(f'<line x1="{ML - 5}" y1="{_f(py(t))}" x2="{ML}" y2="{_f(py(t))}" stroke="black"/>'
                         f'<text x="{ML - 8}" y="{_f(py(t) + 4)}" text-anchor="end">{t:g}</text>')
    ticks.append("</g>")
    out += ticks
    out.append(f'<text x="{ML + pw / 2:.1f}" y="{H - 12}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{MT + ph / 2:.1f}" text-anchor="middle" font-size="12" '
               f'transform="rotate(-90 16 {MT + ph / 2:.1f})">{escape(ylabel)}</text>')
    if zero_line:
        out.append(f'<line id="zero-line" x1="{ML}" y1="{_f(py(0.0))}" x2="{ML + pw}" y2="{_f(py(0.0))}" '
                   f'stroke="#888888" stroke-dasharray="4 3"/>')
    for key, xs, ys in series:
        color = COLORS.get(key, "#555555")
        out.append(f'<g class="series" id="series-{escape(key)}" fill="{color}" fill-opacity="0.7">')
        for x, y in zip(xs, ys):
            out.append(f'<circle cx="{_f(px(x))}" cy="{_f(py(y))}" r="3"/>')
        out.append("</g>")
    out.append('<g id="legend" font-size="12">')
    for i, (key, _, _) in enumerate(series):
        ly = MT + 10 + 18 * i
        out.append(f'<circle cx="{ML + pw + 15}" cy="{ly}" r="4" fill="{COLORS.get(key, "#555555")}"/>'
                   f'<text x="{ML + pw + 25}" y="{ly + 4}">{escape(LABELS.get(key, key))}</text>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_scatter_svg(records, metric: str, out_path) -> Path:
    """Dissimilarity on x, ``metric`` on y, one series per CV method.

    ``metric`` is ``"rmse_diff"`` (signed actual minus CV error, with a zero
    reference line) or ``"rmse"`` (actual error plus each CV estimate).
    """
    records = list(records)
    if not records:
        raise ValueError("no records to plot")
    xs = [r.d for r in records]
    if metric == "rmse_diff":
        series = [(m, xs, [r.rmse_diff[m] for r in records]) for m in CV_METHODS]
        svg = scatter_svg(series, "dissimilarity (%)", "RMSE_diff = RMSE_actual - RMSE_CV",
                          "CV evaluation performance vs dissimilarity")
    elif metric == "rmse":
        series = [("actual", xs, [r.rmse_actual for r in records])]
        series += [(m, xs, [r.rmse_cv[m] for r in records]) for m in CV_METHODS]
        svg = scatter_svg(series, "dissimilarity (%)", "RMSE", "Actual and CV-estimated error",
                          zero_line=False)
    else:
        raise ValueError(f"unknown metric {metric!r}; expected 'rmse_diff' or 'rmse'")
    out_path = Path(out_path)
    out_path.write_text(svg, encoding="utf-8")
    return out_path


def emit_binned_svg(binned, out_path) -> Path:
    binned = list(binned)
    if not binned:
        raise ValueError("no bins to plot")
    xs = [0.5 * (b.bin_low + b.bin_high) for b in binned]
    series = [(m, xs, [b.mean_abs_rmse_diff[m] for b in binned]) for m in CV_METHODS]
    svg = scatter_svg(series, "dissimilarity bin (%)", "mean |RMSE_diff|", "Binned absolute CV error")
    out_path = Path(out_path)
    out_path.write_text(svg, encoding="utf-8")
    return out_path
