"""Minimal self-contained SVG line plots (no plotting toolkit)."""

from __future__ import annotations

import math
from typing import Sequence
from xml.sax.saxutils import escape

_DASHES = ["", "8,5", "2,4", "10,4,2,4"]


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    span = hi - lo
    if span <= 0:
        return [lo]
    raw = span / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=raw)
    first = math.ceil(lo / step) * step
    ticks = []
    v = first
    while v <= hi + 1e-9 * step:
        ticks.append(0.0 if abs(v) < 1e-12 * step else v)
        v += step
    return ticks


def line_plot(series: Sequence[tuple[str, Sequence[float], Sequence[float]]], *,
              xlabel: str, ylabel: str, title: str = "",
              xticks: Sequence[tuple[float, str]] | None = None,
              width: int = 640, height: int = 420) -> str:
    """Render ``(label, x, y)`` series as an SVG document string.

    Series are drawn in black with a different dash pattern each, so the
    output stays readable in print.
    """
    ml, mr, mt, mb = 70, 20, 40 if title else 20, 55
    pw, ph = width - ml - mr, height - mt - mb
    xs = [v for _, x, _ in series for v in x]
    ys = [v for _, _, y in series for v in y]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    pad = 0.05 * (y1 - y0 or 1.0)
    y0, y1 = y0 - pad, y1 + pad

    def sx(v):
        return ml + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return mt + (y1 - v) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]
    if title:
        out.append(f'<text x="{width / 2:.1f}" y="22" text-anchor="middle" font-size="14">'
                   f'{escape(title)}</text>')
    out.append(f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')

    if xticks is None:
        xticks = [(v, f"{v:g}") for v in _nice_ticks(x0, x1)]
    for v, lab in xticks:
        X = _fmt(sx(v))
        out.append(f'<line x1="{X}" y1="{mt + ph}" x2="{X}" y2="{mt + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{X}" y="{mt + ph + 19}" text-anchor="middle">{escape(lab)}</text>')
    for v in _nice_ticks(y0, y1):
        Y = _fmt(sy(v))
        out.append(f'<line x1="{ml - 5}" y1="{Y}" x2="{ml}" y2="{Y}" stroke="black"/>')
        out.append(f'<text x="{ml - 8}" y="{Y}" text-anchor="end" dominant-baseline="middle">'
                   f'{v:g}</text>')
    out.append(f'<text x="{ml + pw / 2:.1f}" y="{height - 12}" text-anchor="middle">'
               f'{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{mt + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {mt + ph / 2:.1f})">{escape(ylabel)}</text>')

    for k, (label, x, y) in enumerate(series):
        pts = " ".join(f"{_fmt(sx(a))},{_fmt(sy(b))}" for a, b in zip(x, y))
        dash = _DASHES[k % len(_DASHES)]
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        out.append(f'<polyline fill="none" stroke="black" stroke-width="1.5"{dash_attr} '
                   f'points="{pts}"/>')
        ly = mt + 16 + 18 * k
        lx = ml + pw - 150
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 30}" y2="{ly}" stroke="black" '
                   f'stroke-width="1.5"{dash_attr}/>')
        out.append(f'<text x="{lx + 36}" y="{ly}" dominant-baseline="middle">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
