"""Static SVG figures from results/batch CSV files, log-scaled cost axis."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from xml.sax.saxutils import escape

from .evaluator import RESULTS_HEADER
from .simulator import BATCH_HEADER

COLORS = {
    "unbiased": "#1f77b4",
    "fully-biased": "#ff7f0e",
    "locally-optimal": "#2ca02c",
    "globally-optimal": "#d62728",
    "collective": "#7f7f7f",
}

WIDTH, HEIGHT = 640, 440
LEFT, RIGHT, TOP, BOTTOM = 70, 170, 30, 50


class PlotInputError(ValueError):
    pass


@dataclass
class Series:
    scheme: str
    measured: bool
    points: list = field(default_factory=list)  # (N, nu, cost, std_err or None)


def read_series(path):
    """Parse one results or batch CSV into per-scheme series."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader, ()))
        if header == RESULTS_HEADER:
            measured = False
        elif header == BATCH_HEADER:
            measured = True
        elif not header:
            raise PlotInputError(f"{path}: empty file")
        else:
            raise PlotInputError(f"{path}:1: unrecognized header {','.join(header)!r}")
        series = {}
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise PlotInputError(
                    f"{path}:{lineno}: expected {len(header)} fields, got {len(rec)}")
            row = dict(zip(header, rec))
            try:
                n = int(row["N"])
                nu = float(row["nu"])
                if measured:
                    cost, err = float(row["error_rate"]), float(row["std_err"])
                else:
                    cost, err = float(row["cost"]), None
            except ValueError as exc:
                raise PlotInputError(f"{path}:{lineno}: {exc}") from None
            key = row["scheme"]
            series.setdefault(key, Series(key, measured)).points.append((n, nu, cost, err))
    if not series:
        raise PlotInputError(f"{path}: no data rows")
    return list(series.values())


def _nice_ticks(lo, hi, count=6):
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / count
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step - 1e-9) * step
    ticks = []
    t = start
    while t <= hi + 1e-9 * step:
        ticks.append(round(t, 12))
        t += step
    return ticks


def _log_ticks(lo, hi):
    ticks = []
    for e in range(math.floor(math.log10(lo)), math.ceil(math.log10(hi)) + 1):
        for m in (1, 2, 5):
            v = m * 10.0 ** e
            if lo <= v <= hi:
                ticks.append(v)
    return ticks or [lo, hi]


def render_svg(series, title=""):
    """SVG text; x is N when the data hold one noise level, otherwise nu."""
    all_pts = [pt for s in series for pt in s.points]
    n_values = {pt[0] for pt in all_pts}
    nu_values = {pt[1] for pt in all_pts}
    by_nu = len(nu_values) > 1 and len(n_values) == 1
    if len(nu_values) > 1 and len(n_values) > 1:
        raise PlotInputError("data vary in both N and nu; plot one figure at a time")
    xs = [pt[1] if by_nu else pt[0] for pt in all_pts]
    ys = [pt[2] for pt in all_pts if pt[2] > 0.0]
    if not ys:
        raise PlotInputError("no positive costs to place on a log axis")
    for pt in all_pts:
        if pt[3]:
            ys.extend(v for v in (pt[2] - pt[3], pt[2] + pt[3]) if v > 0.0)
    x_lo, x_hi = min(xs), max(xs)
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 1, x_hi + 1
    y_lo, y_hi = math.log10(min(ys)), math.log10(max(ys))
    pad = max(0.05 * (y_hi - y_lo), 0.05)
    y_lo, y_hi = y_lo - pad, y_hi + pad
    plot_w, plot_h = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def sx(x):
        return LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w

    def sy(y):
        return TOP + (y_hi - math.log10(y)) / (y_hi - y_lo) * plot_h

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>',
    ]
    if title:
        out.append(f'<text x="{LEFT + plot_w / 2:.1f}" y="{TOP - 10}" text-anchor="middle">'
                   f'{escape(title)}</text>')
    x_ticks = _nice_ticks(x_lo, x_hi) if by_nu else sorted(n_values)
    for t in x_ticks:
        x = sx(t)
        out.append(f'<line x1="{x:.1f}" y1="{TOP + plot_h}" x2="{x:.1f}" y2="{TOP + plot_h + 5}" stroke="black"/>')
        out.append(f'<text x="{x:.1f}" y="{TOP + plot_h + 18}" text-anchor="middle">{t:g}</text>')
    for t in _log_ticks(10 ** y_lo, 10 ** y_hi):
        y = sy(t)
        out.append(f'<line x1="{LEFT - 5}" y1="{y:.1f}" x2="{LEFT}" y2="{y:.1f}" stroke="black"/>')
        out.append(f'<text x="{LEFT - 8}" y="{y + 4:.1f}" text-anchor="end">{t:g}</text>')
    x_label = "noise nu" if by_nu else "copies N"
    out.append(f'<text x="{LEFT + plot_w / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle">{x_label}</text>')
    out.append(f'<text x="16" y="{TOP + plot_h / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {TOP + plot_h / 2:.1f})">error probability C_N</text>')

    legend_y = TOP + 10
    for s in series:
        color = COLORS.get(s.scheme, "black")
        pts = sorted((pt[1] if by_nu else pt[0], pt[2], pt[3]) for pt in s.points)
        if s.measured:
            for x, y, err in pts:
                if y <= 0.0:
                    continue
                cx, cy = sx(x), sy(y)
                if err:
                    top = sy(y + err)
                    bot = sy(y - err) if y - err > 0.0 else TOP + plot_h
                    out.append(f'<line x1="{cx:.1f}" y1="{top:.1f}" x2="{cx:.1f}" y2="{bot:.1f}" stroke="{color}"/>')
                out.append(f'<circle cx="{cx:.1f}" cy="{cy:.1f}" r="3" fill="{color}"/>')
        else:
            coords = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y, _ in pts if y > 0.0)
            out.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        lx = LEFT + plot_w + 12
        if s.measured:
            out.append(f'<circle cx="{lx + 10}" cy="{legend_y - 4}" r="3" fill="{color}"/>')
        else:
            out.append(f'<line x1="{lx}" y1="{legend_y - 4}" x2="{lx + 20}" y2="{legend_y - 4}" stroke="{color}" stroke-width="1.5"/>')
        label = s.scheme + (" (sim)" if s.measured else "")
        out.append(f'<text x="{lx + 26}" y="{legend_y}">{escape(label)}</text>')
        legend_y += 18
    out.append("</svg>")
    return "\n".join(out) + "\n"


def plot_files(paths, out_path, title=""):
    """Read every CSV first, so a parse error leaves no output file behind."""
    series = []
    for path in paths:
        series.extend(read_series(path))
    svg = render_svg(series, title)
    with open(out_path, "w") as fh:
        fh.write(svg)
    return out_path
