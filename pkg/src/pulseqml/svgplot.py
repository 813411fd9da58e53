"""Small dependency-free SVG line plots (polylines, axes, optional log scales)."""
from __future__ import annotations

import math
from xml.sax.saxutils import escape

COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _tick_label(v: float, log: bool) -> str:
    if log:
        return f"1e{int(round(v))}"
    return f"{v:.3g}"


class _Axes:
    def __init__(self, x0, y0, width, height, xlim, ylim, xlog, ylog):
        self.x0, self.y0, self.w, self.h = x0, y0, width, height
        self.xlog, self.ylog = xlog, ylog
        self.xlim = self._span(xlim)
        self.ylim = self._span(ylim)

    @staticmethod
    def _span(lim):
        lo, hi = lim
        if hi - lo < 1e-12:
            lo, hi = lo - 0.5, hi + 0.5
        return lo, hi

    def tx(self, v):
        return self.x0 + (v - self.xlim[0]) / (self.xlim[1] - self.xlim[0]) * self.w

    def ty(self, v):
        return self.y0 + self.h - (v - self.ylim[0]) / (self.ylim[1] - self.ylim[0]) * self.h


def _transform(values, log):
    if not log:
        return [float(v) for v in values]
    return [math.log10(v) if v > 0 else float("nan") for v in values]


def _ticks(lo, hi, log, count=5):
    if log:
        start, stop = math.ceil(lo - 1e-9), math.floor(hi + 1e-9)
        ticks = list(range(start, stop + 1))
        step = max(1, len(ticks) // count)
        return [float(t) for t in ticks[::step]] or [lo, hi]
    return [lo + (hi - lo) * i / (count - 1) for i in range(count)]


def _panel(parts, series, x0, y0, width, height, xlog, ylog, xlabel, ylabel, title, font=12):
    xs_all, ys_all = [], []
    prepared = []
    for s in series:
        xs = _transform(s["x"], xlog)
        ys = _transform(s["y"], ylog)
        pts = [(a, b) for a, b in zip(xs, ys) if math.isfinite(a) and math.isfinite(b)]
        prepared.append((s, pts))
        xs_all += [p[0] for p in pts]
        ys_all += [p[1] for p in pts]
    if not xs_all:
        xs_all, ys_all = [0.0, 1.0], [0.0, 1.0]
    ax = _Axes(x0, y0, width, height, (min(xs_all), max(xs_all)), (min(ys_all), max(ys_all)), xlog, ylog)
    parts.append(f'<rect x="{_fmt(x0)}" y="{_fmt(y0)}" width="{_fmt(width)}" height="{_fmt(height)}" '
                 f'fill="white" stroke="black"/>')
    for t in _ticks(*ax.xlim, xlog):
        x = ax.tx(t)
        parts.append(f'<line x1="{_fmt(x)}" y1="{_fmt(y0 + height)}" x2="{_fmt(x)}" y2="{_fmt(y0 + height + 4)}" stroke="black"/>')
        parts.append(f'<text x="{_fmt(x)}" y="{_fmt(y0 + height + 4 + font)}" font-size="{font - 2}" '
                     f'text-anchor="middle">{_tick_label(t, xlog)}</text>')
    for t in _ticks(*ax.ylim, ylog):
        y = ax.ty(t)
        parts.append(f'<line x1="{_fmt(x0 - 4)}" y1="{_fmt(y)}" x2="{_fmt(x0)}" y2="{_fmt(y)}" stroke="black"/>')
        parts.append(f'<text x="{_fmt(x0 - 6)}" y="{_fmt(y + 4)}" font-size="{font - 2}" '
                     f'text-anchor="end">{_tick_label(t, ylog)}</text>')
    for i, (s, pts) in enumerate(prepared):
        color = s.get("color", COLORS[i % len(COLORS)])
        coords = " ".join(f"{_fmt(ax.tx(a))},{_fmt(ax.ty(b))}" for a, b in pts)
        dash = ' stroke-dasharray="6,4"' if s.get("dashed") else ""
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{coords}"/>')
        if s.get("markers"):
            for a, b in pts:
                parts.append(f'<circle cx="{_fmt(ax.tx(a))}" cy="{_fmt(ax.ty(b))}" r="2.5" fill="{color}"/>')
        if s.get("label"):
            ly = y0 + 14 + 14 * i
            parts.append(f'<line x1="{_fmt(x0 + width - 110)}" y1="{_fmt(ly - 4)}" x2="{_fmt(x0 + width - 90)}" '
                         f'y2="{_fmt(ly - 4)}" stroke="{color}" stroke-width="2"/>')
            parts.append(f'<text x="{_fmt(x0 + width - 86)}" y="{_fmt(ly)}" font-size="{font - 2}">'
                         f'{escape(str(s["label"]))}</text>')
    if title:
        parts.append(f'<text x="{_fmt(x0 + width / 2)}" y="{_fmt(y0 - 8)}" font-size="{font}" '
                     f'text-anchor="middle">{escape(title)}</text>')
    if xlabel:
        parts.append(f'<text x="{_fmt(x0 + width / 2)}" y="{_fmt(y0 + height + 2 * font + 6)}" '
                     f'font-size="{font}" text-anchor="middle">{escape(xlabel)}</text>')
    if ylabel:
        cx, cy = x0 - 48, y0 + height / 2
        parts.append(f'<text x="{_fmt(cx)}" y="{_fmt(cy)}" font-size="{font}" text-anchor="middle" '
                     f'transform="rotate(-90 {_fmt(cx)} {_fmt(cy)})">{escape(ylabel)}</text>')


def line_plot(series, xlog=False, ylog=False, title="", xlabel="", ylabel="", inset=None,
              width=640, height=420) -> str:
    """Render ``series`` (dicts with ``x``, ``y`` and optional ``label``) as an SVG string.

    ``inset`` takes the same keys as this function's arguments (``series``,
    ``xlog``, ``ylog``, ``title``) and is drawn in the upper-left corner.
    """
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'viewBox="0 0 {width} {height}" font-family="sans-serif">',
             f'<rect width="{width}" height="{height}" fill="white"/>']
    left, top, right, bottom = 80, 36, 20, 56
    _panel(parts, series, left, top, width - left - right, height - top - bottom,
           xlog, ylog, xlabel, ylabel, title)
    if inset:
        iw, ih = (width - left - right) * 0.36, (height - top - bottom) * 0.34
        _panel(parts, inset["series"], left + 44, top + 24, iw, ih, inset.get("xlog", False),
               inset.get("ylog", False), "", "", inset.get("title", ""), font=9)
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
