"""Minimal, dependency-free SVG line charts.

Produces byte-stable output: fixed viewBox, deterministic number
formatting, ticks at decade boundaries. Intended for two-series scenario
overlays but accepts any number of series.
"""

from __future__ import annotations

import math
from typing import Sequence

WIDTH = 720
HEIGHT = 420
MARGIN_LEFT = 70
MARGIN_RIGHT = 20
MARGIN_TOP = 40
MARGIN_BOTTOM = 50

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b")


def _fmt(x: float) -> str:
    """Fixed two-decimal coordinate formatting (byte-stable)."""
    return f"{x:.2f}"


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list:
    """Round tick positions covering [lo, hi]."""
    if hi <= lo:
        return [lo]
    span = hi - lo
    raw = span / max(1, n)
    mag = 10 ** math.floor(math.log10(raw))
    for mult in (1, 2, 2.5, 5, 10):
        step = mult * mag
        if span / step <= n:
            break
    first = math.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + 1e-9 * span:
        ticks.append(round(t, 10))
        t += step
    return ticks


def _decade_ticks(lo: float, hi: float) -> list:
    start = int(math.ceil(lo / 10.0)) * 10
    ticks = list(range(start, int(math.floor(hi)) + 1, 10))
    # thin to at most ~11 labels, keeping decade alignment
    while len(ticks) > 11:
        ticks = ticks[::2]
    return ticks


def render_line_chart(times: Sequence[float], series: dict, title: str,
                      y_label: str = "") -> str:
    """Render named series over a shared time axis as an SVG document.

    ``series`` maps legend label to a value list matching ``times``.
    """
    if not series:
        raise ValueError("no series to plot")
    x_lo, x_hi = times[0], times[-1]
    all_vals = [v for s in series.values() for v in s]
    y_lo = min(all_vals + [0.0])
    y_hi = max(all_vals)
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    pad = 0.05 * (y_hi - y_lo)
    y_hi += pad
    if y_lo < 0:
        y_lo -= pad

    plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT
    plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM

    def sx(t):
        return MARGIN_LEFT + plot_w * (t - x_lo) / (x_hi - x_lo)

    def sy(v):
        return MARGIN_TOP + plot_h * (1.0 - (v - y_lo) / (y_hi - y_lo))

    out = []
    out.append(f'<svg xmlns="http://www.w3.org/2000/svg" '
               f'viewBox="0 0 {WIDTH} {HEIGHT}" width="{WIDTH}" height="{HEIGHT}">')
    out.append(f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>')
    out.append(f'<text x="{WIDTH // 2}" y="24" text-anchor="middle" '
               f'font-family="sans-serif" font-size="16">{_escape(title)}</text>')
    # axes
    out.append(f'<line x1="{MARGIN_LEFT}" y1="{MARGIN_TOP}" x2="{MARGIN_LEFT}" '
               f'y2="{HEIGHT - MARGIN_BOTTOM}" stroke="#000000"/>')
    out.append(f'<line x1="{MARGIN_LEFT}" y1="{HEIGHT - MARGIN_BOTTOM}" '
               f'x2="{WIDTH - MARGIN_RIGHT}" y2="{HEIGHT - MARGIN_BOTTOM}" stroke="#000000"/>')
    # x ticks at decades
    for t in _decade_ticks(x_lo, x_hi):
        x = sx(t)
        out.append(f'<line x1="{_fmt(x)}" y1="{HEIGHT - MARGIN_BOTTOM}" '
                   f'x2="{_fmt(x)}" y2="{HEIGHT - MARGIN_BOTTOM + 5}" stroke="#000000"/>')
        out.append(f'<text x="{_fmt(x)}" y="{HEIGHT - MARGIN_BOTTOM + 20}" '
                   f'text-anchor="middle" font-family="sans-serif" font-size="11">{t}</text>')
    # y ticks
    for v in _nice_ticks(y_lo, y_hi):
        y = sy(v)
        out.append(f'<line x1="{MARGIN_LEFT - 5}" y1="{_fmt(y)}" '
                   f'x2="{MARGIN_LEFT}" y2="{_fmt(y)}" stroke="#000000"/>')
        out.append(f'<text x="{MARGIN_LEFT - 8}" y="{_fmt(y + 4)}" text-anchor="end" '
                   f'font-family="sans-serif" font-size="11">{_tick_label(v)}</text>')
    if y_label:
        out.append(f'<text x="16" y="{MARGIN_TOP - 10}" font-family="sans-serif" '
                   f'font-size="12">{_escape(y_label)}</text>')
    # series
    for i, (label, values) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        points = " ".join(f"{_fmt(sx(t))},{_fmt(sy(v))}" for t, v in zip(times, values))
        out.append(f'<polyline points="{points}" fill="none" stroke="{color}" '
                   f'stroke-width="1.5"/>')
        # legend entry
        lx = MARGIN_LEFT + 10
        ly = MARGIN_TOP + 14 + 18 * i
        out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 22}" y2="{ly - 4}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 28}" y="{ly}" font-family="sans-serif" '
                   f'font-size="12">{_escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _tick_label(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        if abs(v) >= 10000:
            return f"{v:.3g}"
        return str(int(v))
    return f"{v:g}"


def _escape(text: str) -> str:
    return (text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;"))
