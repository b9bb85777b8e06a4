"""Dependency-free SVG line charts (polylines only)."""
from __future__ import annotations

import math
from html import escape
from pathlib import Path

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf",
            "#7f7f7f")
W, H = 640, 400
LEFT, RIGHT, TOP, BOTTOM = 70, 160, 40, 50


def _finite(values):
    return [v for v in values if v is not None and math.isfinite(v)]


def _span(lo: float, hi: float) -> tuple[float, float]:
    if hi - lo < 1e-12:
        pad = abs(hi) * 0.05 or 1.0
        return lo - pad, hi + pad
    return lo, hi


def render_svg(series, title: str = "", xlabel: str = "", ylabel: str = "",
               hlines=()) -> str:
    """``series`` is a list of ``(label, xs, ys)``; ``hlines`` of ``(label, y)``."""
    xs_all = _finite(x for _, xs, _ in series for x in xs)
    ys_all = _finite(y for _, _, ys in series for y in ys) + [y for _, y in hlines]
    x0, x1 = _span(min(xs_all, default=0.0), max(xs_all, default=1.0))
    y0, y1 = _span(min(ys_all, default=0.0), max(ys_all, default=1.0))
    pw, ph = W - LEFT - RIGHT, H - TOP - BOTTOM

    def px(x):
        return LEFT + (x - x0) / (x1 - x0) * pw

    def py(y):
        return TOP + (1.0 - (y - y0) / (y1 - y0)) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
        f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
        f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
        f'<text x="{W / 2:.1f}" y="20" text-anchor="middle" font-size="13">{escape(title)}</text>',
        f'<text x="{LEFT + pw / 2:.1f}" y="{H - 12}" text-anchor="middle">{escape(xlabel)}</text>',
        f'<text x="16" y="{TOP + ph / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {TOP + ph / 2:.1f})">{escape(ylabel)}</text>',
    ]
    for frac in (0.0, 0.5, 1.0):
        xv, yv = x0 + frac * (x1 - x0), y0 + frac * (y1 - y0)
        out.append(f'<text x="{px(xv):.1f}" y="{TOP + ph + 16}" text-anchor="middle">{xv:.4g}</text>')
        out.append(f'<text x="{LEFT - 6}" y="{py(yv) + 4:.1f}" text-anchor="end">{yv:.4g}</text>')
    for label, y in hlines:
        out.append(f'<line x1="{LEFT}" x2="{LEFT + pw}" y1="{py(y):.2f}" y2="{py(y):.2f}" '
                   f'stroke="gray" stroke-dasharray="4 3"/>')
        out.append(f'<text x="{LEFT + pw - 4}" y="{py(y) - 4:.1f}" text-anchor="end" '
                   f'fill="gray">{escape(label)}</text>')
    for i, (label, xs, ys) in enumerate(series):
        colour = _PALETTE[i % len(_PALETTE)]
        pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(xs, ys)
                       if x is not None and y is not None and math.isfinite(x) and math.isfinite(y))
        out.append(f'<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{pts}"/>')
        ly = TOP + 14 + 16 * i
        out.append(f'<line x1="{LEFT + pw + 10}" x2="{LEFT + pw + 30}" y1="{ly - 4}" y2="{ly - 4}" '
                   f'stroke="{colour}" stroke-width="2"/>')
        out.append(f'<text x="{LEFT + pw + 34}" y="{ly}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg(path, series, **kwargs) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(render_svg(series, **kwargs))
