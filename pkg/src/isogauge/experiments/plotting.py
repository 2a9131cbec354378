"""Static figures: a dependency-free SVG line chart and matplotlib report figures."""
from __future__ import annotations

import csv
import io
import logging
import math
from pathlib import Path

from ..errors import InvalidInput, ParseError

log = logging.getLogger(__name__)

PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
           "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")

WIDTH, HEIGHT = 640, 400
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 150, 30, 50


def read_table(path, required=()):
    """Read a headed CSV into ``(header, rows)``; rows keep their 1-based line numbers."""
    text = Path(path).read_text()
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty file", line=1) from None
    if not header or any(not h.strip() for h in header):
        raise ParseError("malformed header", line=1)
    rows = []
    for row in reader:
        if not row:
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}",
                             line=reader.line_num)
        rows.append((reader.line_num, row))
    missing = [c for c in required if c not in header]
    if missing:
        raise ParseError(f"missing columns: {', '.join(missing)}", line=1)
    return header, rows


def _number(token, lineno):
    try:
        return float(token)
    except ValueError:
        raise ParseError(f"not a number: {token!r}", line=lineno) from None


def _fmt(v):
    return f"{v:.2f}"


def _label(v):
    return f"{v:.3g}"


def emit_svg(csv_path, series, logy=False, x=None, group=None, title=None) -> str:
    """Line chart of ``series`` columns against ``x`` (default ``layer`` or first column).

    With ``group`` one polyline is drawn per (series, group value). Non-finite
    points, and non-positive ones on a log axis, are dropped with a warning.
    """
    series = [s for s in (series or []) if s]
    if not series:
        raise InvalidInput("no series selected")
    header, rows = read_table(csv_path)
    if x is None:
        x = "layer" if "layer" in header else header[0]
    needed = [x, *series] + ([group] if group else [])
    missing = [c for c in needed if c not in header]
    if missing:
        raise ParseError(f"missing columns: {', '.join(missing)}", line=1)
    xi = header.index(x)
    gi = header.index(group) if group else None

    lines = {}
    dropped = 0
    for lineno, row in rows:
        xv = _number(row[xi], lineno)
        for s in series:
            yv = _number(row[header.index(s)], lineno)
            key = (s, row[gi]) if gi is not None else (s, None)
            pts = lines.setdefault(key, [])
            if not (math.isfinite(xv) and math.isfinite(yv)) or (logy and yv <= 0):
                dropped += 1
                continue
            pts.append((xv, math.log10(yv) if logy else yv))
    if dropped:
        log.warning("dropped %d non-finite or non-positive points", dropped)

    allpts = [p for pts in lines.values() for p in pts]
    if allpts:
        x0, x1 = min(p[0] for p in allpts), max(p[0] for p in allpts)
        y0, y1 = min(p[1] for p in allpts), max(p[1] for p in allpts)
    else:
        x0, x1, y0, y1 = 0.0, 1.0, 0.0, 1.0
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0
    pw = WIDTH - MARGIN_L - MARGIN_R
    ph = HEIGHT - MARGIN_T - MARGIN_B

    def sx(v):
        return MARGIN_L + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return MARGIN_T + (1.0 - (v - y0) / (y1 - y0)) * ph

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" fill="none" '
        'stroke="black" stroke-width="1"/>',
    ]
    ylab = (lambda v: f"1e{v:.3g}") if logy else _label
    for frac in (0.0, 0.5, 1.0):
        xv = x0 + frac * (x1 - x0)
        yv = y0 + frac * (y1 - y0)
        out.append(f'<text x="{_fmt(sx(xv))}" y="{HEIGHT - MARGIN_B + 18}" font-size="11" '
                   f'text-anchor="middle">{_label(xv)}</text>')
        out.append(f'<text x="{MARGIN_L - 6}" y="{_fmt(sy(yv) + 4)}" font-size="11" '
                   f'text-anchor="end">{ylab(yv)}</text>')
    out.append(f'<text x="{MARGIN_L + pw / 2:.2f}" y="{HEIGHT - 10}" font-size="12" '
               f'text-anchor="middle">{x}</text>')
    if title:
        out.append(f'<text x="{MARGIN_L + pw / 2:.2f}" y="18" font-size="13" '
                   f'text-anchor="middle">{title}</text>')
    for i, ((s, g), pts) in enumerate(lines.items()):
        color = PALETTE[i % len(PALETTE)]
        coords = " ".join(f"{_fmt(sx(a))},{_fmt(sy(b))}" for a, b in pts)
        name = s if g is None else f"{g} {s}"
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
                   f'points="{coords}"><title>{name}</title></polyline>')
        ly = MARGIN_T + 14 * i + 10
        out.append(f'<text x="{WIDTH - MARGIN_R + 10}" y="{ly}" font-size="11" '
                   f'fill="{color}">{name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams.update({"font.size": 9, "axes.grid": True, "grid.alpha": 0.3,
                         "svg.hashsalt": "isogauge"})
    return plt


def figure_traces(path, panels, logy=True, xlabel="layer", ylabel="isometry gap"):
    """Save one subplot per panel.

    ``panels`` maps a panel title to a list of ``(label, x, y, yerr_or_None, style)``.
    """
    plt = _pyplot()
    k = max(1, len(panels))
    fig, axes = plt.subplots(1, k, figsize=(3.2 * k, 2.8), squeeze=False)
    for ax, (title, curves) in zip(axes[0], panels.items()):
        for label, xs, ys, err, style in curves:
            line, = ax.plot(xs, ys, style or "-", label=label, lw=1.2)
            if err is not None:
                lo = [a - 2 * e for a, e in zip(ys, err)]
                hi = [a + 2 * e for a, e in zip(ys, err)]
                ax.fill_between(xs, lo, hi, color=line.get_color(), alpha=0.2, lw=0)
        if logy:
            ax.set_yscale("log")
        ax.set_title(title)
        ax.set_xlabel(xlabel)
        ax.legend(fontsize=7)
    axes[0][0].set_ylabel(ylabel)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
