"""Minimal SVG line plots: polylines, step curves, axes and a legend."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b",
           "#e377c2", "#7f7f7f", "#bcbd22")


@dataclass
class Series:
    x: np.ndarray
    y: np.ndarray
    label: str = ""
    step: bool = False
    dashed: bool = False
    points: bool = False


@dataclass
class Plot:
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""
    width: int = 640
    height: int = 420
    series: list[Series] = field(default_factory=list)
    hlines: list[float] = field(default_factory=list)

    def add(self, x, y, label="", *, step=False, dashed=False, points=False) -> "Plot":
        self.series.append(Series(np.asarray(x, float), np.asarray(y, float), label, step, dashed,
                                  points))
        return self

    def _bounds(self):
        xs = np.concatenate([s.x for s in self.series]) if self.series else np.array([0.0, 1.0])
        ys = np.concatenate([s.y for s in self.series] + [np.asarray(self.hlines, float)])
        xs, ys = xs[np.isfinite(xs)], ys[np.isfinite(ys)]
        x0, x1 = float(xs.min()), float(xs.max())
        y0, y1 = float(min(ys.min(), 0.0)), float(ys.max()) if ys.size else 1.0
        if x1 == x0:
            x1 = x0 + 1.0
        if y1 == y0:
            y1 = y0 + 1.0
        pad = 0.05 * (y1 - y0)
        return x0, x1, y0, y1 + pad

    def render(self) -> str:
        left, right, top, bottom = 60, 20, 30, 45
        w, h = self.width - left - right, self.height - top - bottom
        x0, x1, y0, y1 = self._bounds()

        def px(v):
            return left + (v - x0) / (x1 - x0) * w

        def py(v):
            return top + (1.0 - (v - y0) / (y1 - y0)) * h

        out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" '
               f'height="{self.height}" font-family="sans-serif" font-size="11">',
               f'<rect width="{self.width}" height="{self.height}" fill="white"/>',
               f'<rect x="{left}" y="{top}" width="{w}" height="{h}" fill="none" stroke="black"/>']
        for tick in _ticks(x0, x1):
            out.append(f'<line x1="{px(tick):.2f}" y1="{top + h}" x2="{px(tick):.2f}" '
                       f'y2="{top + h + 4}" stroke="black"/>')
            out.append(f'<text x="{px(tick):.2f}" y="{top + h + 16}" '
                       f'text-anchor="middle">{tick:g}</text>')
        for tick in _ticks(y0, y1):
            out.append(f'<line x1="{left - 4}" y1="{py(tick):.2f}" x2="{left}" '
                       f'y2="{py(tick):.2f}" stroke="black"/>')
            out.append(f'<text x="{left - 6}" y="{py(tick) + 4:.2f}" '
                       f'text-anchor="end">{tick:g}</text>')
        for v in self.hlines:
            out.append(f'<line x1="{left}" y1="{py(v):.2f}" x2="{left + w}" y2="{py(v):.2f}" '
                       'stroke="#888" stroke-dasharray="4 3"/>')
        for i, s in enumerate(self.series):
            color = PALETTE[i % len(PALETTE)]
            xs, ys = s.x, s.y
            if s.step:
                xs, ys = np.repeat(xs, 2)[1:], np.repeat(ys, 2)[:-1]
            ok = np.isfinite(xs) & np.isfinite(ys)
            dash = ' stroke-dasharray="6 3"' if s.dashed else ""
            if s.points:
                out.extend(f'<circle cx="{px(a):.2f}" cy="{py(b):.2f}" r="1.2" fill="{color}"/>'
                           for a, b in zip(xs[ok], ys[ok]))
            else:
                pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(xs[ok], ys[ok]))
                out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                           f'stroke-width="1.5"{dash}/>')
            if s.label:
                ly = top + 14 + 14 * i
                out.append(f'<line x1="{left + w - 150}" y1="{ly - 4}" x2="{left + w - 130}" '
                           f'y2="{ly - 4}" stroke="{color}" stroke-width="2"{dash}/>')
                out.append(f'<text x="{left + w - 125}" y="{ly}">{escape(s.label)}</text>')
        if self.title:
            out.append(f'<text x="{self.width / 2}" y="18" text-anchor="middle" '
                       f'font-size="13">{escape(self.title)}</text>')
        if self.xlabel:
            out.append(f'<text x="{left + w / 2}" y="{self.height - 8}" '
                       f'text-anchor="middle">{escape(self.xlabel)}</text>')
        if self.ylabel:
            out.append(f'<text x="14" y="{top + h / 2}" text-anchor="middle" '
                       f'transform="rotate(-90 14 {top + h / 2})">{escape(self.ylabel)}</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.render())


def _ticks(lo: float, hi: float, target: int = 6) -> list[float]:
    span = hi - lo
    raw = span / target
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10)), key=lambda s: abs(s - raw))
    start = math.ceil(lo / step) * step
    return [round(start + i * step, 12) for i in range(int((hi - start) / step) + 1)]
