"""Minimal deterministic SVG line charts.

Output is plain text with fixed numeric formatting, so identical inputs
produce byte-identical files (usable as golden files in tests).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")


@dataclass
class Series:
    name: str
    x: Sequence[float]
    y: Sequence[float]


@dataclass
class Panel:
    title: str
    xlabel: str
    ylabel: str
    series: list[Series] = field(default_factory=list)
    # optional text labels for integer x positions (categorical axis)
    xticklabels: Sequence[str] | None = None
    # (x position, label) vertical markers
    markers: Sequence[tuple[float, str]] = ()


def _n(v: float) -> str:
    s = f"{v:.2f}"
    return "0.00" if s == "-0.00" else s


def _nice_ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if not (math.isfinite(lo) and math.isfinite(hi)):
        return []
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / count
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step - 1e-9) * step
    ticks = []
    v = start
    while v <= hi + 1e-9 * step:
        ticks.append(round(v, 12))
        v += step
    return ticks


def _fmt_tick(v: float) -> str:
    s = f"{v:.6g}"
    return "0" if s in ("-0", "0") else s


def _panel_svg(panel: Panel, ox: float, oy: float, w: float, h: float) -> list[str]:
    left, right, top, bottom = 70.0, 20.0, 36.0, 60.0
    pw, ph = w - left - right, h - top - bottom
    xs = [float(x) for s in panel.series for x, y in zip(s.x, s.y) if _finite(y)]
    ys = [float(y) for s in panel.series for y in s.y if _finite(y)]
    xlo, xhi = (min(xs), max(xs)) if xs else (0.0, 1.0)
    ylo, yhi = (min(ys), max(ys)) if ys else (0.0, 1.0)
    if panel.xticklabels is not None:
        xlo, xhi = 0.0, max(len(panel.xticklabels) - 1, 1)
    if xhi == xlo:
        xlo, xhi = xlo - 0.5, xhi + 0.5
    pad = 0.05 * (yhi - ylo) if yhi > ylo else max(abs(yhi) * 0.05, 1e-6)
    ylo, yhi = ylo - pad, yhi + pad

    def px(x):
        return ox + left + (x - xlo) / (xhi - xlo) * pw

    def py(y):
        return oy + top + (1.0 - (y - ylo) / (yhi - ylo)) * ph

    out = [f'<g class="panel">',
           f'<text x="{_n(ox + w / 2)}" y="{_n(oy + 22)}" text-anchor="middle" '
           f'font-size="14">{escape(panel.title)}</text>',
           f'<rect x="{_n(ox + left)}" y="{_n(oy + top)}" width="{_n(pw)}" height="{_n(ph)}" '
           f'fill="none" stroke="#000000" stroke-width="1"/>']
    for t in _nice_ticks(ylo, yhi):
        y = py(t)
        out.append(f'<line x1="{_n(ox + left)}" y1="{_n(y)}" x2="{_n(ox + left + pw)}" y2="{_n(y)}" '
                   f'stroke="#dddddd" stroke-width="1"/>')
        out.append(f'<text x="{_n(ox + left - 6)}" y="{_n(y + 4)}" text-anchor="end" '
                   f'font-size="10">{_fmt_tick(t)}</text>')
    if panel.xticklabels is not None:
        labels = list(panel.xticklabels)
        every = max(1, math.ceil(len(labels) / 12))
        for i in range(0, len(labels), every):
            x = px(i)
            out.append(f'<text x="{_n(x)}" y="{_n(oy + top + ph + 14)}" text-anchor="end" '
                       f'font-size="9" transform="rotate(-45 {_n(x)} {_n(oy + top + ph + 14)})">'
                       f'{escape(labels[i])}</text>')
    else:
        for t in _nice_ticks(xlo, xhi):
            x = px(t)
            out.append(f'<text x="{_n(x)}" y="{_n(oy + top + ph + 16)}" text-anchor="middle" '
                       f'font-size="10">{_fmt_tick(t)}</text>')
    out.append(f'<text x="{_n(ox + left + pw / 2)}" y="{_n(oy + h - 8)}" text-anchor="middle" '
               f'font-size="11">{escape(panel.xlabel)}</text>')
    yl_x, yl_y = ox + 16, oy + top + ph / 2
    out.append(f'<text x="{_n(yl_x)}" y="{_n(yl_y)}" text-anchor="middle" font-size="11" '
               f'transform="rotate(-90 {_n(yl_x)} {_n(yl_y)})">{escape(panel.ylabel)}</text>')
    for x, label in panel.markers:
        X = px(float(x))
        out.append(f'<line x1="{_n(X)}" y1="{_n(oy + top)}" x2="{_n(X)}" y2="{_n(oy + top + ph)}" '
                   f'stroke="#999999" stroke-dasharray="3,3" stroke-width="1">'
                   f'<title>{escape(label)}</title></line>')
    for i, s in enumerate(panel.series):
        color = PALETTE[i % len(PALETTE)]
        pts = [(px(float(x)), py(float(y))) for x, y in zip(s.x, s.y) if _finite(y)]
        if pts:
            coords = " ".join(f"{_n(a)},{_n(b)}" for a, b in pts)
            out.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.5"/>')
            for a, b in pts:
                out.append(f'<circle cx="{_n(a)}" cy="{_n(b)}" r="2" fill="{color}"/>')
        ly = oy + top + 14 + 14 * i
        lx = ox + left + pw - 150
        out.append(f'<line x1="{_n(lx)}" y1="{_n(ly - 4)}" x2="{_n(lx + 18)}" y2="{_n(ly - 4)}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{_n(lx + 22)}" y="{_n(ly)}" font-size="10">{escape(s.name)}</text>')
    out.append("</g>")
    return out


def _finite(v) -> bool:
    try:
        return math.isfinite(float(v))
    except (TypeError, ValueError):
        return False


def render_svg(panels: Sequence[Panel], panel_width: float = 480, panel_height: float = 320) -> str:
    """Lay panels out left to right and return the SVG document text."""
    width = panel_width * len(panels)
    lines = ['<?xml version="1.0" encoding="UTF-8"?>',
             f'<svg xmlns="http://www.w3.org/2000/svg" width="{_n(width)}" height="{_n(panel_height)}" '
             f'viewBox="0 0 {_n(width)} {_n(panel_height)}" font-family="sans-serif">',
             f'<rect width="{_n(width)}" height="{_n(panel_height)}" fill="#ffffff"/>']
    for i, panel in enumerate(panels):
        lines.extend(_panel_svg(panel, i * panel_width, 0.0, panel_width, panel_height))
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def write_svg(path, panels: Sequence[Panel], **kw) -> Path:
    path = Path(path)
    path.write_text(render_svg(panels, **kw), encoding="utf-8")
    return path


def sweep_panels(k_result=None, c_result=None) -> list[Panel]:
    panels = []
    for res, xlabel, title in ((k_result, "k (assets dropped)", "DI_1: risk vs k"),
                               (c_result, "C (share of benchmark footprint)", "DI_2: risk vs C")):
        if res is None:
            continue
        t = res.table
        markers = [] if res.best is None else [(res.best, f"selected {res.parameter}={res.best:g}")]
        panels.append(Panel(title, xlabel, "risk", [Series("risk", list(t.iloc[:, 0]), list(t.risk_value))],
                            markers=markers))
    return panels


def monthly_return_panel(report, title: str | None = None) -> Panel:
    out = report.out_sample
    months = list(out["month"])
    x = list(range(len(months)))
    series = [Series("Benchmark", x, list(out["bp_return"]))]
    for lab in report.spec_labels:
        series.append(Series(lab, x, list(out[lab])))
    markers = [(i, ev) for i, ev in enumerate(out["event"]) if ev]
    return Panel(title or f"Monthly returns ({report.proxy})", "month", "return (%)", series,
                 xticklabels=months, markers=markers)
