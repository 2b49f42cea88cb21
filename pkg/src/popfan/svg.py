"""Standalone SVG fan chart: history, forecast mean and nested bands."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

from popfan.arima import ForecastBand
from popfan.bridge import DensitySeries
from popfan.errors import ArgumentError, FileIOError

WIDTH, HEIGHT = 720, 420
MARGIN = {"left": 70, "right": 20, "top": 40, "bottom": 50}
BAND_FILLS = ("#c6dbef", "#6baed6", "#2171b5", "#08519c")


def _nice_step(span: float, target: int = 8) -> float:
    raw = span / target
    mag = 10 ** math.floor(math.log10(raw))
    for m in (1, 2, 5, 10):
        if raw <= m * mag:
            return m * mag
    return 10 * mag


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def fanchart_svg(
    history: DensitySeries | None,
    bands: Sequence[ForecastBand],
    title: str = "Density forecast",
    y_label: str = "persons per km²",
) -> str:
    if not bands:
        raise ArgumentError("fan chart needs at least one forecast band", "svg")
    levels = sorted({lv for b in bands for lv in b.intervals}, reverse=True)
    bands = sorted(bands, key=lambda b: b.year)
    hist_years: list[int] = []
    hist_vals: list[float] = []
    if history is not None:
        hist_years = history.series.years
        hist_vals = list(history.series.values)

    xs = hist_years + [b.year for b in bands]
    ys = hist_vals + [b.mean for b in bands]
    for b in bands:
        for lo, hi in b.intervals.values():
            ys += [lo, hi]
    x0, x1 = min(xs), max(xs)
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    y0, y1 = min(ys), max(ys)
    if y1 == y0:
        y0, y1 = y0 - 1, y1 + 1
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    left, top = MARGIN["left"], MARGIN["top"]
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def px(year):
        return left + (year - x0) / (x1 - x0) * pw

    def py(v):
        return top + (y1 - v) / (y1 - y0) * ph

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
        f"<title>{escape(title)}</title>",
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
    ]

    # widest level first so narrower bands are drawn on top
    for i, level in enumerate(levels):
        upper = [f"{_fmt(px(b.year))},{_fmt(py(b.intervals[level][1]))}" for b in bands]
        lower = [f"{_fmt(px(b.year))},{_fmt(py(b.intervals[level][0]))}" for b in reversed(bands)]
        fill = BAND_FILLS[min(i, len(BAND_FILLS) - 1)]
        out.append(
            f'<polygon class="band" data-level="{level:g}" points="{" ".join(upper + lower)}" '
            f'fill="{fill}" fill-opacity="0.8" stroke="none"/>'
        )

    # axes
    out.append(
        f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>'
    )
    out.append(f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>')
    step = max(1, int(_nice_step(x1 - x0)))
    tick = math.ceil(x0 / step) * step
    while tick <= x1:
        x = px(tick)
        out.append(f'<line x1="{_fmt(x)}" y1="{top + ph}" x2="{_fmt(x)}" y2="{top + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{_fmt(x)}" y="{top + ph + 18}" text-anchor="middle">{tick}</text>')
        tick += step
    ystep = _nice_step(y1 - y0, 6)
    ytick = math.ceil(y0 / ystep) * ystep
    while ytick <= y1:
        y = py(ytick)
        out.append(f'<line x1="{left - 5}" y1="{_fmt(y)}" x2="{left}" y2="{_fmt(y)}" stroke="black"/>')
        out.append(f'<text x="{left - 8}" y="{_fmt(y + 4)}" text-anchor="end">{ytick:g}</text>')
        ytick = round(ytick + ystep, 10)
    out.append(f'<text x="{left + pw / 2:.1f}" y="{HEIGHT - 10}" text-anchor="middle">year</text>')
    out.append(
        f'<text x="16" y="{top + ph / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {top + ph / 2:.1f})">{escape(y_label)}</text>'
    )

    if hist_years:
        pts = " ".join(f"{_fmt(px(y))},{_fmt(py(v))}" for y, v in zip(hist_years, hist_vals))
        out.append(f'<polyline class="history" points="{pts}" fill="none" stroke="black" stroke-width="1.5"/>')
    mean_pts = [(b.year, b.mean) for b in bands]
    if hist_years and hist_years[-1] < bands[0].year:
        mean_pts.insert(0, (hist_years[-1], hist_vals[-1]))
    pts = " ".join(f"{_fmt(px(y))},{_fmt(py(v))}" for y, v in mean_pts)
    out.append(
        f'<polyline class="mean" points="{pts}" fill="none" stroke="#d62728" '
        f'stroke-width="1.5" stroke-dasharray="5,3"/>'
    )

    for i, level in enumerate(levels):
        y = top + 12 + 14 * i
        fill = BAND_FILLS[min(i, len(BAND_FILLS) - 1)]
        out.append(f'<rect x="{left + 10}" y="{y - 9}" width="12" height="10" fill="{fill}"/>')
        out.append(f'<text x="{left + 28}" y="{y}">{level * 100:g}% interval</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_fanchart_svg(
    history: DensitySeries | None, bands: Sequence[ForecastBand], path: str | Path, **kwargs
) -> Path:
    text = fanchart_svg(history, bands, **kwargs)
    path = Path(path)
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise FileIOError(f"cannot write {path}: {exc}", "svg") from exc
    return path
