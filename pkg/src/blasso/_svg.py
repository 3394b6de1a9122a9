"""Minimal static SVG plotter: polylines with error bars on a log-x axis.

Kept dependency-free on purpose so emitted figures are bit-stable
artifacts of the run configuration alone.
"""

from __future__ import annotations

import math

_COLORS = ["#1f6fb2", "#d1495b", "#3a7d44", "#8d6fb8", "#c77d2e", "#4a4a4a"]

WIDTH, HEIGHT = 880, 560
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 80, 30, 48, 64


def _fmt(x: float) -> str:
    return f"{x:.3f}".rstrip("0").rstrip(".")


class LogXPlot:
    """Polyline plot with a log10 x axis and optional error bars."""

    def __init__(self, title: str, xlabel: str, ylabel: str):
        self.title = title
        self.xlabel = xlabel
        self.ylabel = ylabel
        self.series = []  # (label, xs, ys, errs or None)

    def add_series(self, label, xs, ys, errs=None):
        pts = [(float(x), float(y), None if errs is None else float(e))
               for x, y, e in zip(xs, ys, errs if errs is not None else ys)
               if x > 0 and math.isfinite(y)]
        if pts:
            self.series.append((label, pts))

    def _ranges(self):
        xs = [p[0] for _, pts in self.series for p in pts]
        ys = []
        for _, pts in self.series:
            for x, y, e in pts:
                ys.append(y)
                if e is not None and math.isfinite(e):
                    ys.extend([y - e, y + e])
        if not xs:
            return 0.1, 1.0, 0.0, 1.0
        x_lo, x_hi = math.log10(min(xs)), math.log10(max(xs))
        if x_hi - x_lo < 1e-9:
            x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
        y_lo, y_hi = min(ys), max(ys)
        if y_hi - y_lo < 1e-12:
            pad = 0.5 * (abs(y_hi) + 1.0)
            y_lo, y_hi = y_lo - pad, y_hi + pad
        else:
            pad = 0.06 * (y_hi - y_lo)
            y_lo, y_hi = y_lo - pad, y_hi + pad
        return x_lo, x_hi, y_lo, y_hi

    def render(self) -> str:
        x_lo, x_hi, y_lo, y_hi = self._ranges()
        inner_w = WIDTH - MARGIN_L - MARGIN_R
        inner_h = HEIGHT - MARGIN_T - MARGIN_B

        def sx(x):
            return MARGIN_L + inner_w * (math.log10(x) - x_lo) / (x_hi - x_lo)

        def sy(y):
            return MARGIN_T + inner_h * (1.0 - (y - y_lo) / (y_hi - y_lo))

        parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
            f'width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}">',
            f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
            f'<text x="{WIDTH / 2}" y="26" text-anchor="middle" '
            f'font-family="sans-serif" font-size="17">{self.title}</text>',
        ]
        # frame
        parts.append(
            f'<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{inner_w}" '
            f'height="{inner_h}" fill="none" stroke="#333" stroke-width="1"/>')
        # x ticks at powers of ten (and the data extremes)
        for exp in range(math.floor(x_lo), math.ceil(x_hi) + 1):
            if exp < x_lo - 1e-9 or exp > x_hi + 1e-9:
                continue
            px = MARGIN_L + inner_w * (exp - x_lo) / (x_hi - x_lo)
            parts.append(f'<line x1="{_fmt(px)}" y1="{MARGIN_T}" '
                         f'x2="{_fmt(px)}" y2="{MARGIN_T + inner_h}" '
                         f'stroke="#ddd" stroke-width="1"/>')
            parts.append(f'<text x="{_fmt(px)}" y="{MARGIN_T + inner_h + 20}" '
                         f'text-anchor="middle" font-family="sans-serif" '
                         f'font-size="12">1e{exp}</text>')
        # y ticks
        for i in range(6):
            y = y_lo + (y_hi - y_lo) * i / 5
            py = sy(y)
            parts.append(f'<line x1="{MARGIN_L}" y1="{_fmt(py)}" '
                         f'x2="{MARGIN_L + inner_w}" y2="{_fmt(py)}" '
                         f'stroke="#eee" stroke-width="1"/>')
            parts.append(f'<text x="{MARGIN_L - 8}" y="{_fmt(py + 4)}" '
                         f'text-anchor="end" font-family="sans-serif" '
                         f'font-size="12">{y:.4g}</text>')
        parts.append(f'<text x="{WIDTH / 2}" y="{HEIGHT - 16}" '
                     f'text-anchor="middle" font-family="sans-serif" '
                     f'font-size="14">{self.xlabel}</text>')
        parts.append(f'<text x="20" y="{HEIGHT / 2}" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="14" '
                     f'transform="rotate(-90 20 {HEIGHT / 2})">{self.ylabel}</text>')

        for idx, (label, pts) in enumerate(self.series):
            color = _COLORS[idx % len(_COLORS)]
            coords = " ".join(f"{_fmt(sx(x))},{_fmt(sy(y))}" for x, y, _ in pts)
            parts.append(f'<polyline points="{coords}" fill="none" '
                         f'stroke="{color}" stroke-width="2"/>')
            for x, y, e in pts:
                px, py = sx(x), sy(y)
                parts.append(f'<circle cx="{_fmt(px)}" cy="{_fmt(py)}" r="3" '
                             f'fill="{color}"/>')
                if e is not None and math.isfinite(e) and e > 0:
                    y1, y2 = sy(y - e), sy(y + e)
                    parts.append(f'<line x1="{_fmt(px)}" y1="{_fmt(y1)}" '
                                 f'x2="{_fmt(px)}" y2="{_fmt(y2)}" '
                                 f'stroke="{color}" stroke-width="1.5"/>')
                    for yy in (y1, y2):
                        parts.append(f'<line x1="{_fmt(px - 4)}" y1="{_fmt(yy)}" '
                                     f'x2="{_fmt(px + 4)}" y2="{_fmt(yy)}" '
                                     f'stroke="{color}" stroke-width="1.5"/>')
            # legend
            ly = MARGIN_T + 18 + 18 * idx
            lx = MARGIN_L + inner_w - 170
            parts.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 26}" '
                         f'y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
            parts.append(f'<text x="{lx + 32}" y="{ly}" '
                         f'font-family="sans-serif" font-size="13">{label}</text>')
        parts.append("</svg>")
        return "\n".join(parts) + "\n"
