"""Batch CSV validation, grouped summaries and SVG line charts."""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Iterable, Sequence

from .traffic import METRICS, RunResult, aggregate_runs


class ReportError(ValueError):
    pass


_INT_COLUMNS = {"seed", "nodes", "data_sent", "data_received", "control_packets", "ids_packets",
                "drop_adversarial", "drop_congestion", "drop_no_route", "drop_avoid", "in_flight",
                "declarations", "false_accusations", "honest_nodes", "honest_accused", "repeat"}
_FLOAT_COLUMNS = {"malicious_fraction", "pause_time", "window_size", "throughput_bps"}
_OPTIONAL_FLOATS = {"pdr", "routing_overhead", "ids_overhead", "avg_latency_s"}


def write_rows(path: Path, results: Iterable[RunResult], append: bool = False) -> None:
    path = Path(path)
    fresh = not append or not path.exists() or path.stat().st_size == 0
    with open(path, "a" if append else "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=RunResult.columns())
        if fresh:
            w.writeheader()
        for r in results:
            w.writerow(r.row())


def read_batch(path: Path) -> list[dict]:
    """Parse and type-check a batch CSV; errors name the offending column."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames
        if not header:
            raise ReportError(f"{path}: empty batch file")
        missing = [c for c in RunResult.columns() if c not in header]
        if missing:
            raise ReportError(f"{path}: missing column {missing[0]!r}")
        rows = []
        for lineno, raw in enumerate(reader, start=2):
            rows.append(_typed(raw, path, lineno))
    if not rows:
        raise ReportError(f"{path}: batch has no result rows")
    return rows


def _typed(raw: dict, path: Path, lineno: int) -> dict:
    out = dict(raw)
    for col in RunResult.columns():
        v = raw.get(col)
        if v is None:
            raise ReportError(f"{path}:{lineno}: column {col!r} is missing")
        try:
            if col in _INT_COLUMNS:
                out[col] = int(v)
            elif col in _FLOAT_COLUMNS:
                out[col] = float(v)
            elif col in _OPTIONAL_FLOATS:
                out[col] = float(v) if v != "" else None
        except ValueError:
            raise ReportError(f"{path}:{lineno}: column {col!r} has bad value {v!r}") from None
        if col == "ids" and v not in ("on", "off"):
            raise ReportError(f"{path}:{lineno}: column 'ids' must be on or off, got {v!r}")
    return out


def summarize(rows: Sequence[dict]):
    """Mean and population stddev per (dimension, value, ids); scenarios are never pooled."""
    return aggregate_runs(rows, group_by=("sweep_dimension", "sweep_value", "ids"), metrics=METRICS)


def _sort_value(v: str):
    try:
        return (0, float(v), "")
    except ValueError:
        return (1, 0.0, v)


def summary_table(rows: Sequence[dict]) -> str:
    lines = [f"{'dimension':<16}{'value':>8}{'ids':>5}{'runs':>6}  "
             + "  ".join(f"{m:>24}" for m in METRICS)]
    summary = sorted(summarize(rows), key=lambda s: (s.key[0], _sort_value(s.key[1]), s.key[2]))
    for s in summary:
        cells = []
        for m in METRICS:
            mu, sd = s.mean[m], s.stddev[m]
            cells.append(f"{'n/a':>24}" if mu is None else f"{mu:>14.4f} +/- {sd:<7.4f}")
        dim, val, ids = s.key
        lines.append(f"{dim or '-':<16}{val or '-':>8}{ids:>5}{s.runs:>6}  " + "  ".join(cells))
    return "\n".join(lines) + "\n"


# -- charts -------------------------------------------------------------------

# dimension -> list of (file stem, metric, y label, x label, x scale)
CHARTS = {
    "malicious_pct": [("pdr_vs_malicious", "pdr", "Packet delivery ratio", "Malicious nodes (%)", 1.0),
                      ("overhead_vs_malicious", "routing_overhead", "Routing overhead",
                       "Malicious nodes (%)", 1.0)],
    "window_size": [("pdr_vs_window", "pdr", "Packet delivery ratio", "Window size (s)", 1.0),
                    ("overhead_vs_window", "routing_overhead", "Routing overhead", "Window size (s)", 1.0)],
    "pause_time": [("pdr_vs_pause", "pdr", "Packet delivery ratio", "Pause time (s)", 1.0)],
}

_COLORS = {"on": "#1f6fb4", "off": "#d2552b"}
_LABELS = {"on": "DSR + reputation IDS", "off": "plain DSR"}


def series(rows: Sequence[dict], dimension: str, metric: str) -> dict[str, list[tuple[float, float, float]]]:
    """ids -> sorted (x, mean, stddev) points for one swept dimension."""
    out: dict[str, list] = {}
    for s in summarize([r for r in rows if r["sweep_dimension"] == dimension]):
        _, val, ids = s.key
        if s.mean[metric] is None:
            continue
        out.setdefault(ids, []).append((float(val), s.mean[metric], s.stddev[metric]))
    for pts in out.values():
        pts.sort()
    return out


def _nice_max(v: float) -> float:
    if v <= 0:
        return 1.0
    mag = 10 ** math.floor(math.log10(v))
    for step in (1, 2, 2.5, 5, 10):
        if v <= step * mag:
            return step * mag
    return 10 * mag


def line_chart_svg(data: dict[str, list[tuple[float, float, float]]], title: str,
                   xlabel: str, ylabel: str, ymax: float | None = None) -> str:
    w, h = 640, 420
    left, right, top, bottom = 70, 20, 40, 60
    pw, ph = w - left - right, h - top - bottom
    xs = sorted({p[0] for pts in data.values() for p in pts}) or [0.0, 1.0]
    x0, x1 = xs[0], xs[-1]
    if x0 == x1:
        x0, x1 = x0 - 1, x1 + 1
    top_val = max((p[1] + p[2] for pts in data.values() for p in pts), default=1.0)
    y1 = ymax if ymax is not None else _nice_max(top_val)

    def sx(x):
        return left + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return top + ph - min(max(y, 0.0), y1) / y1 * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
           f'font-family="sans-serif" font-size="12">',
           f'<rect width="{w}" height="{h}" fill="white"/>',
           f'<text x="{w / 2}" y="22" text-anchor="middle" font-size="15">{title}</text>',
           f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
           f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>']
    for i in range(6):
        yv = y1 * i / 5
        y = sy(yv)
        out.append(f'<line x1="{left}" y1="{y:.1f}" x2="{left + pw}" y2="{y:.1f}" stroke="#ddd"/>')
        out.append(f'<text x="{left - 6}" y="{y + 4:.1f}" text-anchor="end">{yv:.3g}</text>')
    for xv in xs:
        x = sx(xv)
        out.append(f'<line x1="{x:.1f}" y1="{top + ph}" x2="{x:.1f}" y2="{top + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{x:.1f}" y="{top + ph + 18}" text-anchor="middle">{xv:g}</text>')
    out.append(f'<text x="{left + pw / 2}" y="{h - 18}" text-anchor="middle">{xlabel}</text>')
    out.append(f'<text x="18" y="{top + ph / 2}" text-anchor="middle" '
               f'transform="rotate(-90 18 {top + ph / 2})">{ylabel}</text>')
    for k, ids in enumerate(sorted(data)):
        pts = data[ids]
        color = _COLORS.get(ids, "#555")
        poly = " ".join(f"{sx(x):.1f},{sy(m):.1f}" for x, m, _ in pts)
        out.append(f'<polyline points="{poly}" fill="none" stroke="{color}" stroke-width="2"/>')
        for x, m, sd in pts:
            out.append(f'<line x1="{sx(x):.1f}" y1="{sy(m - sd):.1f}" x2="{sx(x):.1f}" '
                       f'y2="{sy(m + sd):.1f}" stroke="{color}"/>')
            out.append(f'<circle cx="{sx(x):.1f}" cy="{sy(m):.1f}" r="3.5" fill="{color}"/>')
        ly = top + 10 + 18 * k
        out.append(f'<line x1="{left + pw - 170}" y1="{ly}" x2="{left + pw - 150}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw - 145}" y="{ly + 4}">{_LABELS.get(ids, ids)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def build_report(batch: Path, out_dir: Path) -> list[Path]:
    """Write ``summary.txt`` plus one SVG per chart whose dimension is present."""
    rows = read_batch(batch)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = [out_dir / "summary.txt"]
    written[0].write_text(summary_table(rows))
    dims = {r["sweep_dimension"] for r in rows}
    for dim, charts in CHARTS.items():
        if dim not in dims:
            continue
        for stem, metric, ylabel, xlabel, _ in charts:
            data = series(rows, dim, metric)
            ymax = 1.0 if metric == "pdr" else None
            svg = line_chart_svg(data, f"{ylabel} vs {xlabel.split(' (')[0].lower()}",
                                 xlabel, ylabel, ymax)
            path = out_dir / f"{stem}.svg"
            path.write_text(svg)
            written.append(path)
    return written
