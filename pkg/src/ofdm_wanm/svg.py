"""Minimal SVG plots written without any plotting dependency."""

from __future__ import annotations

import math
from typing import Sequence
from xml.sax.saxutils import escape

__all__ = ["certificate_plot", "line_plot", "scatter_plot"]

WIDTH, HEIGHT = 640, 420
MARGIN = dict(left=70, right=130, top=40, bottom=50)
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _num(v: float) -> str:
    return f"{v:.2f}"


class _Axes:
    def __init__(self, xlim, ylim, log_y=False):
        self.x0, self.x1 = xlim
        self.log_y = log_y
        y0, y1 = ylim
        if log_y:
            y0, y1 = math.log10(y0), math.log10(y1)
        if y1 <= y0:
            y0, y1 = y0 - 1.0, y1 + 1.0
        if self.x1 <= self.x0:
            self.x0, self.x1 = self.x0 - 1.0, self.x1 + 1.0
        self.y0, self.y1 = y0, y1
        self.left = MARGIN["left"]
        self.right = WIDTH - MARGIN["right"]
        self.top = MARGIN["top"]
        self.bottom = HEIGHT - MARGIN["bottom"]

    def px(self, x: float) -> float:
        return self.left + (x - self.x0) / (self.x1 - self.x0) * (self.right - self.left)

    def py(self, y: float) -> float:
        v = math.log10(y) if self.log_y else y
        return self.bottom - (v - self.y0) / (self.y1 - self.y0) * (self.bottom - self.top)

    def frame(self, title: str, xlabel: str, ylabel: str) -> list[str]:
        out = [
            f'<rect x="{self.left}" y="{self.top}" width="{self.right - self.left}" '
            f'height="{self.bottom - self.top}" fill="none" stroke="black"/>',
            f'<text x="{WIDTH / 2}" y="22" text-anchor="middle" font-size="15">{escape(title)}</text>',
            f'<text x="{(self.left + self.right) / 2}" y="{HEIGHT - 12}" text-anchor="middle" '
            f'font-size="13">{escape(xlabel)}</text>',
            f'<text x="16" y="{(self.top + self.bottom) / 2}" text-anchor="middle" font-size="13" '
            f'transform="rotate(-90 16 {(self.top + self.bottom) / 2})">{escape(ylabel)}</text>',
        ]
        for i in range(6):
            x = self.x0 + i * (self.x1 - self.x0) / 5
            out.append(f'<text x="{_num(self.px(x))}" y="{self.bottom + 16}" text-anchor="middle" '
                       f'font-size="11">{x:.4g}</text>')
        if self.log_y:
            for e in range(math.floor(self.y0), math.ceil(self.y1) + 1):
                if self.y0 <= e <= self.y1:
                    y = self.py(10.0**e)
                    out.append(f'<text x="{self.left - 6}" y="{_num(y + 4)}" text-anchor="end" '
                               f'font-size="11">1e{e}</text>')
        else:
            for i in range(6):
                v = self.y0 + i * (self.y1 - self.y0) / 5
                out.append(f'<text x="{self.left - 6}" y="{_num(self.py(v) + 4)}" text-anchor="end" '
                           f'font-size="11">{v:.3g}</text>')
        return out


def _document(body: list[str]) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}">')
    return "\n".join([head, '<rect width="100%" height="100%" fill="white"/>', *body, "</svg>"]) + "\n"


def _legend(names: Sequence[str]) -> list[str]:
    out = []
    x = WIDTH - MARGIN["right"] + 12
    for i, name in enumerate(names):
        y = MARGIN["top"] + 14 + 18 * i
        c = COLORS[i % len(COLORS)]
        out.append(f'<line x1="{x}" y1="{y - 4}" x2="{x + 18}" y2="{y - 4}" stroke="{c}" stroke-width="2"/>')
        out.append(f'<text x="{x + 24}" y="{y}" font-size="12">{escape(name)}</text>')
    return out


def line_plot(series: dict[str, tuple[Sequence[float], Sequence[float]]], title: str, xlabel: str,
              ylabel: str, log_y: bool = False) -> str:
    """One polyline per named series; non-finite or non-positive (log axis) points are skipped."""

    def usable(v):
        return math.isfinite(v) and (v > 0 or not log_y)

    xs = [x for xv, yv in series.values() for x, y in zip(xv, yv) if usable(y)]
    ys = [y for _, yv in series.values() for y in yv if usable(y)]
    if not xs:
        xs, ys = [0.0, 1.0], [1.0, 10.0] if log_y else [0.0, 1.0]
    ax = _Axes((min(xs), max(xs)), (min(ys), max(ys)), log_y)
    body = ax.frame(title, xlabel, ylabel)
    for i, (name, (xv, yv)) in enumerate(series.items()):
        pts = [(ax.px(x), ax.py(y)) for x, y in zip(xv, yv) if usable(y)]
        c = COLORS[i % len(COLORS)]
        if pts:
            path = " ".join(f"{_num(a)},{_num(b)}" for a, b in pts)
            body.append(f'<polyline fill="none" stroke="{c}" stroke-width="2" points="{path}" '
                        f'data-series="{escape(name)}"/>')
            body.extend(f'<circle cx="{_num(a)}" cy="{_num(b)}" r="3" fill="{c}"/>' for a, b in pts)
    body.extend(_legend(list(series)))
    return _document(body)


def scatter_plot(points: dict[str, tuple[Sequence[float], Sequence[float]]], title: str, xlabel: str,
                 ylabel: str, ylim: tuple[float, float] | None = None) -> str:
    """Unconnected markers per named group."""
    xs = [x for xv, _ in points.values() for x in xv]
    ys = [y for _, yv in points.values() for y in yv]
    if not xs:
        xs, ys = [0.0, 1.0], [0.0, 1.0]
    ax = _Axes((min(xs), max(xs)), ylim or (min(ys), max(ys)))
    body = ax.frame(title, xlabel, ylabel)
    for i, (name, (xv, yv)) in enumerate(points.items()):
        c = COLORS[i % len(COLORS)]
        body.extend(f'<circle cx="{_num(ax.px(x))}" cy="{_num(ax.py(y))}" r="2.5" fill="{c}" '
                    f'fill-opacity="0.6"/>' for x, y in zip(xv, yv))
    body.extend(_legend(list(points)))
    return _document(body)


def certificate_plot(f: Sequence[float], magnitude: Sequence[float], bands, truth: Sequence[float] = ()) -> str:
    """``|Q(f)|`` over [0, 1) with the prior bands shaded and their weights drawn as levels."""
    top = max([1.0, *magnitude, *(w for _, _, w in bands)]) * 1.05
    ax = _Axes((0.0, 1.0), (0.0, top))
    body = []
    for lo, hi, w in bands:
        x0, x1 = ax.px(lo), ax.px(min(hi, 1.0))
        body.append(f'<rect class="band" x="{_num(x0)}" y="{ax.top}" width="{_num(x1 - x0)}" '
                    f'height="{ax.bottom - ax.top}" fill="#ffe680" fill-opacity="0.6" '
                    f'data-f-low="{lo!r}" data-f-high="{hi!r}" data-weight="{w!r}"/>')
        body.append(f'<line x1="{_num(x0)}" y1="{_num(ax.py(w))}" x2="{_num(x1)}" y2="{_num(ax.py(w))}" '
                    f'stroke="black" stroke-dasharray="4 3"/>')
    body.extend(ax.frame("Dual polynomial magnitude", "normalized frequency f", "|Q(f)|"))
    for t in truth:
        body.append(f'<line x1="{_num(ax.px(t))}" y1="{ax.top}" x2="{_num(ax.px(t))}" y2="{ax.bottom}" '
                    f'stroke="#2ca02c" stroke-dasharray="2 2"/>')
    path = " ".join(f"{_num(ax.px(x))},{_num(ax.py(y))}" for x, y in zip(f, magnitude))
    body.append(f'<polyline fill="none" stroke="{COLORS[0]}" stroke-width="1.5" points="{path}"/>')
    return _document(body)
