"""CSV tables and standalone SVG line plots.

Output bytes depend only on the input values: floats are printed with a
fixed number of decimals and lines end in ``\\n``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple
from xml.sax.saxutils import escape

from fedsched.core import ClusterSpec
from fedsched.experiment import SWEEP_COLUMNS, ExperimentResult, SweepResult
from fedsched.scheduler import utilisation

ROUNDS_COLUMNS = ("round", "strategy", "makespan_s", "alloc_vram_pct", "used_vram_pct", "oom_count")
TIMELINE_COLUMNS = ("t_s", "device", "alloc_vram_mb", "used_vram_mb")

WIDTH, HEIGHT = 800, 500
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 80, 30, 40, 60
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")


def _cell(v) -> str:
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def csv_text(columns: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def rounds_rows(result: ExperimentResult, cluster: ClusterSpec) -> List[tuple]:
    rows = []
    for r in result.reports:
        alloc, used = utilisation(r, cluster)
        rows.append((r.round_index, result.kind, float(r.makespan_s), alloc, used, r.oom_count))
    return rows


def timeline_rows(result: ExperimentResult) -> List[tuple]:
    rows = []
    for r in result.reports:
        for tr in r.traces:
            for t, alloc, used in tr.points:
                rows.append((float(t), tr.device_index, alloc, used))
    return rows


def sweep_rows(sweep: SweepResult) -> List[tuple]:
    return [tuple(getattr(row, c) for c in SWEEP_COLUMNS) for row in sweep.rows]


def write_text(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


@dataclass(frozen=True)
class Series:
    name: str
    points: Tuple[Tuple[float, float], ...]


def _range(values: Sequence[float]) -> Tuple[float, float]:
    lo, hi = min(values), max(values)
    if hi == lo:
        pad = abs(lo) * 0.1 or 1.0
        return lo - pad, hi + pad
    return lo, hi


def _ticks(lo: float, hi: float, n: int = 5) -> List[float]:
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw)
    first = math.ceil(lo / step) * step
    out = []
    k = 0
    while first + k * step <= hi + step * 1e-9:
        out.append(round(first + k * step, 10))
        k += 1
    return out


def _num(x: float) -> str:
    return f"{x:.2f}"


def _label(x: float) -> str:
    return f"{x:g}"


def render_svg(series: Sequence[Series], x_label: str, y_label: str, title: Optional[str] = None) -> str:
    """Line plot on a fixed 800x500 canvas with a legend in the top-right corner."""
    if not series or any(not s.points for s in series):
        raise ValueError("need at least one series, each with at least one point")
    x0, x1 = _range([p[0] for s in series for p in s.points])
    y0, y1 = _range([p[1] for s in series for p in s.points])
    y0 = min(y0, 0.0)
    pw, ph = WIDTH - MARGIN_L - MARGIN_R, HEIGHT - MARGIN_T - MARGIN_B

    def sx(x: float) -> float:
        return MARGIN_L + (x - x0) / (x1 - x0) * pw

    def sy(y: float) -> float:
        return MARGIN_T + ph - (y - y0) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    if title:
        out.append(f'<text x="{WIDTH / 2:.0f}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{escape(title)}</text>')
    out.append(
        f'<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" fill="none" stroke="#333" stroke-width="1"/>'
    )
    for x in _ticks(x0, x1):
        px = _num(sx(x))
        out.append(f'<line x1="{px}" y1="{MARGIN_T + ph}" x2="{px}" y2="{MARGIN_T + ph + 5}" stroke="#333"/>')
        out.append(
            f'<text x="{px}" y="{MARGIN_T + ph + 20}" text-anchor="middle" font-family="sans-serif" font-size="12">{_label(x)}</text>'
        )
    for y in _ticks(y0, y1):
        py = _num(sy(y))
        out.append(f'<line x1="{MARGIN_L}" y1="{py}" x2="{MARGIN_L + pw}" y2="{py}" stroke="#ddd"/>')
        out.append(
            f'<text x="{MARGIN_L - 8}" y="{py}" text-anchor="end" dominant-baseline="middle" font-family="sans-serif" font-size="12">{_label(y)}</text>'
        )
    out.append(
        f'<text x="{MARGIN_L + pw / 2:.0f}" y="{HEIGHT - 15}" text-anchor="middle" font-family="sans-serif" font-size="14">{escape(x_label)}</text>'
    )
    out.append(
        f'<text x="20" y="{MARGIN_T + ph / 2:.0f}" text-anchor="middle" font-family="sans-serif" font-size="14" '
        f'transform="rotate(-90 20 {MARGIN_T + ph / 2:.0f})">{escape(y_label)}</text>'
    )
    for i, s in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        coords = " ".join(f"{_num(sx(x))},{_num(sy(y))}" for x, y in s.points)
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{coords}"/>')
        for x, y in s.points:
            out.append(f'<circle cx="{_num(sx(x))}" cy="{_num(sy(y))}" r="3" fill="{color}"/>')
        ly = MARGIN_T + 18 + 20 * i
        lx = MARGIN_L + pw - 190
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 24}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(
            f'<text x="{lx + 32}" y="{ly}" dominant-baseline="middle" font-family="sans-serif" font-size="12">{escape(s.name)}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_svg(series: Sequence[Series], x_label: str, y_label: str, path, title: Optional[str] = None) -> None:
    write_text(Path(path), render_svg(series, x_label, y_label, title))


def sweep_series(sweep: SweepResult) -> List[Series]:
    out = []
    for kind in dict.fromkeys(r.strategy for r in sweep.rows):
        pts = tuple((float(r.clients_per_round), r.total_time_s) for r in sweep.rows if r.strategy == kind)
        out.append(Series(kind, pts))
    return out


def utilisation_series(result: ExperimentResult, cluster: ClusterSpec) -> List[Series]:
    """Allocated and in-use VRAM (% of all device VRAM) as step lines over the whole run."""
    total = cluster.total_vram_mb
    merged = {}
    for r in result.reports:
        times = sorted({p[0] for tr in r.traces for p in tr.points})
        for t in times:
            alloc = used = 0
            for tr in r.traces:
                before = [p for p in tr.points if p[0] <= t]
                if before:
                    alloc += before[-1][1]
                    used += before[-1][2]
            merged[t] = (100.0 * alloc / total, 100.0 * used / total)
    times = sorted(merged)
    alloc_pts: List[Tuple[float, float]] = []
    used_pts: List[Tuple[float, float]] = []
    for i, t in enumerate(times):
        a, u = merged[t]
        if i:
            alloc_pts.append((t, alloc_pts[-1][1]))
            used_pts.append((t, used_pts[-1][1]))
        alloc_pts.append((t, a))
        used_pts.append((t, u))
    return [Series("allocated VRAM %", tuple(alloc_pts)), Series("VRAM in use %", tuple(used_pts))]
