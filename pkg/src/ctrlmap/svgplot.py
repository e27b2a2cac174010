"""Minimal deterministic SVG line charts (no plotting dependency)."""

from __future__ import annotations

import math
from dataclasses import dataclass

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
           "#8c564b", "#17becf", "#7f7f7f"]

WIDTH, HEIGHT = 720, 480
ML, MR, MT, MB = 76, 22, 44, 56


@dataclass
class Series:
    name: str
    x: list
    y: list
    yerr: list | None = None
    dashed: bool = False


def _nice_step(span: float) -> float:
    if span <= 0.0:
        return 1.0
    raw = span / 5.0
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 5.0, 10.0):
        if raw <= mult * mag:
            return mult * mag
    return 10.0 * mag


def _linear_ticks(lo: float, hi: float):
    step = _nice_step(hi - lo)
    first = math.ceil(lo / step - 1e-9) * step
    ticks = []
    v = first
    while v <= hi + 1e-9 * max(1.0, abs(hi)):
        ticks.append(0.0 if abs(v) < 1e-12 * step else v)
        v += step
    return ticks


def _log_ticks(lo: float, hi: float):
    ticks = []
    e = math.floor(math.log10(lo))
    while 10.0 ** e <= hi * (1 + 1e-9):
        if 10.0 ** e >= lo * (1 - 1e-9):
            ticks.append(10.0 ** e)
        e += 1
    if len(ticks) < 2:
        return [lo, hi]
    return ticks


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def render_line_chart(path: str, series: list[Series], title: str,
                      xlabel: str, ylabel: str, logy: bool = False) -> None:
    xs = [float(x) for s in series for x in s.x]
    ys = []
    for s in series:
        for i, y in enumerate(s.y):
            y = float(y)
            err = float(s.yerr[i]) if s.yerr is not None else 0.0
            ys.extend([y - err, y + err])
    if logy:
        ys = [y for y in ys if y > 0.0]
    if not xs or not ys:
        raise ValueError("nothing to plot")
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
    if logy:
        y_lo = max(y_lo, 1e-300)
        if y_hi <= y_lo:
            y_hi = y_lo * 10.0
        ly_lo, ly_hi = math.log10(y_lo) - 0.05, math.log10(y_hi) + 0.05
    else:
        pad = 0.06 * (y_hi - y_lo) if y_hi > y_lo else max(0.5, abs(y_hi) * 0.1)
        y_lo, y_hi = y_lo - pad, y_hi + pad

    pw, ph = WIDTH - ML - MR, HEIGHT - MT - MB

    def px(x: float) -> float:
        return ML + pw * (x - x_lo) / (x_hi - x_lo)

    def py(y: float) -> float:
        if logy:
            ly = math.log10(max(y, 1e-300))
            return MT + ph * (1.0 - (ly - ly_lo) / (ly_hi - ly_lo))
        return MT + ph * (1.0 - (y - y_lo) / (y_hi - y_lo))

    out = []
    out.append(f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" '
               f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">')
    out.append(f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>')
    out.append(f'<text x="{WIDTH / 2:.1f}" y="24" text-anchor="middle" '
               f'font-family="sans-serif" font-size="15">{title}</text>')

    y_ticks = _log_ticks(y_lo if not logy else 10 ** ly_lo, y_hi if not logy else 10 ** ly_hi) \
        if logy else _linear_ticks(y_lo, y_hi)
    x_ticks = _linear_ticks(x_lo, x_hi)
    for v in y_ticks:
        yy = py(v)
        if yy < MT - 1 or yy > MT + ph + 1:
            continue
        out.append(f'<line x1="{ML}" y1="{yy:.2f}" x2="{ML + pw}" y2="{yy:.2f}" '
                   f'stroke="#dddddd" stroke-width="1"/>')
        out.append(f'<text x="{ML - 8}" y="{yy + 4:.2f}" text-anchor="end" '
                   f'font-family="sans-serif" font-size="11">{_fmt(v)}</text>')
    for v in x_ticks:
        xx = px(v)
        out.append(f'<line x1="{xx:.2f}" y1="{MT + ph}" x2="{xx:.2f}" '
                   f'y2="{MT + ph + 5}" stroke="#333333" stroke-width="1"/>')
        out.append(f'<text x="{xx:.2f}" y="{MT + ph + 20}" text-anchor="middle" '
                   f'font-family="sans-serif" font-size="11">{_fmt(v)}</text>')
    out.append(f'<rect x="{ML}" y="{MT}" width="{pw}" height="{ph}" '
               f'fill="none" stroke="#333333" stroke-width="1"/>')
    out.append(f'<text x="{ML + pw / 2:.1f}" y="{HEIGHT - 14}" text-anchor="middle" '
               f'font-family="sans-serif" font-size="13">{xlabel}</text>')
    out.append(f'<text x="20" y="{MT + ph / 2:.1f}" text-anchor="middle" '
               f'font-family="sans-serif" font-size="13" '
               f'transform="rotate(-90 20 {MT + ph / 2:.1f})">{ylabel}</text>')

    for si, s in enumerate(series):
        color = PALETTE[si % len(PALETTE)]
        dash = ' stroke-dasharray="7 4"' if s.dashed else ""
        pts = " ".join(f"{px(float(x)):.2f},{py(float(y)):.2f}"
                       for x, y in zip(s.x, s.y)
                       if not logy or float(y) > 0.0)
        if pts:
            out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                       f'stroke-width="2"{dash}/>')
        if s.yerr is not None:
            for x, y, e in zip(s.x, s.y, s.yerr):
                x, y, e = float(x), float(y), float(e)
                if logy and (y - e <= 0.0 or y <= 0.0):
                    continue
                xx, y1, y2 = px(x), py(y - e), py(y + e)
                out.append(f'<line x1="{xx:.2f}" y1="{y1:.2f}" x2="{xx:.2f}" '
                           f'y2="{y2:.2f}" stroke="{color}" stroke-width="1"/>')
                out.append(f'<line x1="{xx - 3:.2f}" y1="{y1:.2f}" x2="{xx + 3:.2f}" '
                           f'y2="{y1:.2f}" stroke="{color}" stroke-width="1"/>')
                out.append(f'<line x1="{xx - 3:.2f}" y1="{y2:.2f}" x2="{xx + 3:.2f}" '
                           f'y2="{y2:.2f}" stroke="{color}" stroke-width="1"/>')
        for x, y in zip(s.x, s.y):
            if logy and float(y) <= 0.0:
                continue
            out.append(f'<circle cx="{px(float(x)):.2f}" cy="{py(float(y)):.2f}" '
                       f'r="2.6" fill="{color}"/>')

    ly = MT + 14
    for si, s in enumerate(series):
        color = PALETTE[si % len(PALETTE)]
        dash = ' stroke-dasharray="7 4"' if s.dashed else ""
        lx = ML + pw - 190
        out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 26}" y2="{ly - 4}" '
                   f'stroke="{color}" stroke-width="2"{dash}/>')
        out.append(f'<text x="{lx + 32}" y="{ly}" font-family="sans-serif" '
                   f'font-size="11">{s.name}</text>')
        ly += 16

    out.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(out) + "\n")
