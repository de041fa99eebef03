"""Minimal SVG charts: polylines, scatter points, horizontal reference lines."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")


@dataclass
class Series:
    label: str
    x: Sequence[float]
    y: Sequence[float]
    kind: str = "line"  # "line" | "points" | "line+points"


@dataclass
class Chart:
    title: str
    xlabel: str = ""
    ylabel: str = ""
    series: list[Series] = field(default_factory=list)
    hlines: list[tuple[float, str]] = field(default_factory=list)
    diagonal: bool = False  # y = x reference, for prediction-vs-truth plots
    width: int = 640
    height: int = 400

    def add(self, label, x, y, kind="line") -> "Chart":
        self.series.append(Series(label, list(x), list(y), kind))
        return self


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((s * mag for s in (1, 2, 5, 10) if s * mag >= raw), default=raw)
    first = math.ceil(lo / step) * step
    out = []
    v = first
    while v <= hi + 1e-9 * step:
        out.append(round(v, 12))
        v += step
    return out


def render(chart: Chart) -> str:
    W, H = chart.width, chart.height
    left, right, top, bottom = 70, 20, 36, 50
    xs = [v for s in chart.series for v in s.x if math.isfinite(v)]
    ys = [v for s in chart.series for v in s.y if math.isfinite(v)]
    ys += [v for v, _ in chart.hlines if math.isfinite(v)]
    if not xs or not ys:
        xs, ys = [0.0, 1.0], [0.0, 1.0]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if chart.diagonal:
        x0 = y0 = min(x0, y0)
        x1 = y1 = max(x1, y1)
    if x1 - x0 < 1e-12:
        x0, x1 = x0 - 0.5, x1 + 0.5
    pad = 0.05 * (y1 - y0) if y1 > y0 else 0.5
    y0, y1 = y0 - pad, y1 + pad

    def px(x):
        return left + (x - x0) / (x1 - x0) * (W - left - right)

    def py(y):
        return H - bottom - (y - y0) / (y1 - y0) * (H - top - bottom)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
           f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">',
           f'<rect width="{W}" height="{H}" fill="white"/>',
           f'<text x="{W / 2:.1f}" y="20" text-anchor="middle" font-size="14">{escape(chart.title)}</text>']
    # axes and ticks
    out.append(f'<line x1="{left}" y1="{H - bottom}" x2="{W - right}" y2="{H - bottom}" stroke="black"/>')
    out.append(f'<line x1="{left}" y1="{top}" x2="{left}" y2="{H - bottom}" stroke="black"/>')
    for t in _ticks(x0, x1):
        out.append(f'<line x1="{px(t):.1f}" y1="{H - bottom}" x2="{px(t):.1f}" y2="{H - bottom + 4}" stroke="black"/>')
        out.append(f'<text x="{px(t):.1f}" y="{H - bottom + 16}" text-anchor="middle">{t:g}</text>')
    for t in _ticks(y0, y1):
        out.append(f'<line x1="{left - 4}" y1="{py(t):.1f}" x2="{left}" y2="{py(t):.1f}" stroke="black"/>')
        out.append(f'<text x="{left - 6}" y="{py(t) + 4:.1f}" text-anchor="end">{t:g}</text>')
    out.append(f'<text x="{(left + W - right) / 2:.1f}" y="{H - 10}" text-anchor="middle">{escape(chart.xlabel)}</text>')
    out.append(f'<text x="14" y="{(top + H - bottom) / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 14 {(top + H - bottom) / 2:.1f})">{escape(chart.ylabel)}</text>')
    if chart.diagonal:
        out.append(f'<line x1="{px(x0):.1f}" y1="{py(x0):.1f}" x2="{px(x1):.1f}" y2="{py(x1):.1f}" '
                   'stroke="#888" stroke-dasharray="4 3"/>')
    for v, label in chart.hlines:
        out.append(f'<line x1="{left}" y1="{py(v):.1f}" x2="{W - right}" y2="{py(v):.1f}" '
                   'stroke="#444" stroke-dasharray="6 4"/>')
        out.append(f'<text x="{W - right - 4}" y="{py(v) - 4:.1f}" text-anchor="end">{escape(label)}</text>')
    for k, s in enumerate(chart.series):
        color = PALETTE[k % len(PALETTE)]
        pts = [(px(a), py(b)) for a, b in zip(s.x, s.y) if math.isfinite(a) and math.isfinite(b)]
        if "line" in s.kind and len(pts) > 1:
            path = " ".join(f"{a:.1f},{b:.1f}" for a, b in pts)
            out.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        if "points" in s.kind:
            out += [f'<circle cx="{a:.1f}" cy="{b:.1f}" r="2" fill="{color}"/>' for a, b in pts]
        ly = top + 14 * (k + 1)
        out.append(f'<rect x="{left + 10}" y="{ly - 8}" width="10" height="3" fill="{color}"/>')
        out.append(f'<text x="{left + 24}" y="{ly - 3}">{escape(s.label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def save(chart: Chart, path: str | Path) -> None:
    Path(path).write_text(render(chart))
