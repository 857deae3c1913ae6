"""Accuracy-per-round line chart as a standalone SVG file."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import List, Sequence, Tuple, Union

WIDTH, HEIGHT = 640, 400
LEFT, RIGHT, TOP, BOTTOM = 60, 170, 20, 50
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")

Series = Tuple[str, List[Tuple[int, float]]]


class PlotError(ValueError):
    pass


def arm_name(path: Union[str, Path]) -> str:
    stem = Path(path).stem
    return stem[len("telemetry_"):] if stem.startswith("telemetry_") else stem


def read_accuracy(path: Union[str, Path]) -> List[Tuple[int, float]]:
    """(round, global_accuracy) pairs, one per round, from a telemetry CSV."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise PlotError(f"{path}: empty telemetry file")
    header = rows[0]
    try:
        ri, ai = header.index("round"), header.index("global_accuracy")
    except ValueError:
        raise PlotError(f"{path}: header lacks round/global_accuracy columns") from None
    points = {}
    for lineno, row in enumerate(rows[1:], start=2):
        try:
            t, acc = int(row[ri]), float(row[ai])
        except (ValueError, IndexError):
            raise PlotError(f"{path}:{lineno}: malformed row") from None
        if points.setdefault(t, acc) != acc:
            raise PlotError(f"{path}:{lineno}: conflicting accuracy for round {t}")
    if not points:
        raise PlotError(f"{path}: telemetry has no rounds")
    return sorted(points.items())


def _x(t: float, t_max: float) -> float:
    span = WIDTH - LEFT - RIGHT
    return LEFT + (span * (t - 1) / (t_max - 1) if t_max > 1 else span / 2)


def _y(acc: float) -> float:
    acc = min(max(acc, 0.0), 1.0)
    return TOP + (HEIGHT - TOP - BOTTOM) * (1.0 - acc)


def render_svg(series: Sequence[Series]) -> str:
    if not series:
        raise PlotError("no series to plot")
    t_max = max(t for _, pts in series for t, _ in pts)
    bottom = HEIGHT - BOTTOM
    right = WIDTH - RIGHT
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<line x1="{LEFT}" y1="{bottom}" x2="{right}" y2="{bottom}" stroke="black"/>',
        f'<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{bottom}" stroke="black"/>',
    ]
    for i in range(6):
        acc = i / 5
        y = _y(acc)
        out.append(f'<line x1="{LEFT - 4}" y1="{y:.2f}" x2="{right}" y2="{y:.2f}" stroke="#dddddd"/>')
        out.append(f'<text x="{LEFT - 8}" y="{y + 4:.2f}" text-anchor="end">{acc:.1f}</text>')
    step = max(1, t_max // 10)
    for t in range(1, t_max + 1, step):
        x = _x(t, t_max)
        out.append(f'<text x="{x:.2f}" y="{bottom + 16}" text-anchor="middle">{t}</text>')
    out.append(f'<text x="{(LEFT + right) / 2:.2f}" y="{HEIGHT - 12}" text-anchor="middle">round</text>')
    out.append(f'<text x="16" y="{(TOP + bottom) / 2:.2f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {(TOP + bottom) / 2:.2f})">test accuracy</text>')
    for i, (name, pts) in enumerate(series):
        color = COLORS[i % len(COLORS)]
        coords = " ".join(f"{_x(t, t_max):.2f},{_y(a):.2f}" for t, a in pts)
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{coords}"/>')
        ly = TOP + 10 + 18 * i
        out.append(f'<line x1="{right + 12}" y1="{ly}" x2="{right + 32}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{right + 38}" y="{ly + 4}">{name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_plot(telemetry: Sequence[Union[str, Path]], out: Union[str, Path]) -> str:
    """Write one polyline per telemetry file (named after the file's arm) to ``out``."""
    if not telemetry:
        raise PlotError("at least one telemetry file is required")
    text = render_svg([(arm_name(p), read_accuracy(p)) for p in telemetry])
    Path(out).write_text(text, encoding="utf-8")
    return text
