"""Minimal SVG line plot for time series (no plotting dependency)."""
from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

from .errors import DomainError

WIDTH, HEIGHT = 800, 500
MARGIN = dict(left=70, right=20, top=40, bottom=50)


def nice_ticks(lo, hi, count=5):
    """Rounded tick positions covering ``[lo, hi]`` (at least four)."""
    if not hi > lo:
        hi = lo + 1.0
    raw = (hi - lo) / max(count - 1, 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1, 2, 2.5, 5, 10):
        step = mult * mag
        if (hi - lo) / step <= count:
            break
    ticks = _span(lo, hi, step)
    while len(ticks) < 4:
        step /= 2
        ticks = _span(lo, hi, step)
    return [float(round(v, 12)) for v in ticks]


def _span(lo, hi, step):
    # multiples of step from at or below lo to at or above hi
    first = math.floor(lo / step + 1e-9)
    last = math.ceil(hi / step - 1e-9)
    return [k * step for k in range(first, last + 1)]


def emit_svg(series, path, title="", xlabel="t", ylabel=""):
    """Write ``[(t, value), ...]`` as an 800x500 SVG with one polyline."""
    data = np.asarray(list(series), dtype=float)
    if data.size == 0:
        raise DomainError("cannot plot an empty series")
    data = data.reshape(-1, 2)
    t, y = data[:, 0], data[:, 1]
    xt = nice_ticks(float(t.min()), float(t.max()))
    yt = nice_ticks(float(min(y.min(), 0.0)), float(y.max()))
    x0, x1 = xt[0], xt[-1]
    y0, y1 = yt[0], yt[-1]
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def px(v):
        return MARGIN["left"] + (v - x0) / (x1 - x0) * pw

    def py(v):
        return MARGIN["top"] + ph - (v - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}">',
           '<rect width="100%" height="100%" fill="white"/>',
           f'<text x="{WIDTH / 2}" y="24" text-anchor="middle" font-size="16">{escape(title)}</text>',
           f'<g stroke="black" stroke-width="1">'
           f'<line x1="{px(x0):.2f}" y1="{py(y0):.2f}" x2="{px(x1):.2f}" y2="{py(y0):.2f}"/>'
           f'<line x1="{px(x0):.2f}" y1="{py(y0):.2f}" x2="{px(x0):.2f}" y2="{py(y1):.2f}"/></g>']
    for v in xt:
        out.append(f'<g class="xtick"><line x1="{px(v):.2f}" y1="{py(y0):.2f}" x2="{px(v):.2f}" '
                   f'y2="{py(y0) + 5:.2f}" stroke="black"/><text x="{px(v):.2f}" '
                   f'y="{py(y0) + 20:.2f}" text-anchor="middle" font-size="12">{v:g}</text></g>')
    for v in yt:
        out.append(f'<g class="ytick"><line x1="{px(x0) - 5:.2f}" y1="{py(v):.2f}" x2="{px(x0):.2f}" '
                   f'y2="{py(v):.2f}" stroke="black"/><text x="{px(x0) - 8:.2f}" '
                   f'y="{py(v) + 4:.2f}" text-anchor="end" font-size="12">{v:g}</text></g>')
    if xlabel:
        out.append(f'<text x="{MARGIN["left"] + pw / 2}" y="{HEIGHT - 10}" text-anchor="middle" '
                   f'font-size="13">{escape(xlabel)}</text>')
    if ylabel:
        out.append(f'<text x="16" y="{MARGIN["top"] + ph / 2}" font-size="13" '
                   f'transform="rotate(-90 16 {MARGIN["top"] + ph / 2})" text-anchor="middle">'
                   f'{escape(ylabel)}</text>')
    pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(t, y))
    out.append(f'<polyline fill="none" stroke="steelblue" stroke-width="1.5" points="{pts}"/>')
    out.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(out) + "\n")
