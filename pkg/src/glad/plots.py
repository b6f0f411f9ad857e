"""Deterministic SVG figures drawn from the per-node CSVs of a report.

Each figure reads exactly one CSV, so the plotted numbers are the numbers in
the file. Output is plain SVG text with fixed dimensions, fixed number
formatting and elements emitted in row order.
"""
from __future__ import annotations

import csv
import math
from pathlib import Path
from xml.sax.saxutils import escape

WIDTH, HEIGHT = 640, 360
LEFT, RIGHT, TOP, BOTTOM = 64, 64, 40, 56
COLORS = ("#4c72b0", "#dd8452", "#55a868", "#c44e52")


def _num(x: float) -> str:
    return f"{x:.2f}"


def _tick_label(x: float) -> str:
    return format(round(x, 6), "g")


def _ticks(lo: float, hi: float, n: int = 5) -> list:
    if hi <= lo:
        return [lo]
    return [lo + (hi - lo) * k / (n - 1) for k in range(n)]


def _limits(values, pad=0.05, floor=None):
    vals = [v for v in values if v is not None and math.isfinite(v)]
    if not vals:
        lo, hi = 0.0, 1.0
    else:
        lo, hi = min(vals), max(vals)
    if floor is not None:
        lo = min(lo, floor)
    if hi == lo:
        hi = lo + 1.0
    span = hi - lo
    return lo - (0 if floor is not None and lo == floor else pad * span), hi + pad * span


class Canvas:
    """A fixed-size SVG plot area with linear axes."""

    def __init__(self, title: str, xlim, ylim, xlabel: str = "", ylabel: str = ""):
        self.xlim, self.ylim = xlim, ylim
        self.elements = []
        self.x0, self.x1 = LEFT, WIDTH - RIGHT
        self.y0, self.y1 = HEIGHT - BOTTOM, TOP
        self._axes(title, xlabel, ylabel)

    def sx(self, x: float) -> float:
        lo, hi = self.xlim
        return self.x0 + (x - lo) / (hi - lo) * (self.x1 - self.x0)

    def sy(self, y: float) -> float:
        lo, hi = self.ylim
        return self.y0 + (y - lo) / (hi - lo) * (self.y1 - self.y0)

    def add(self, element: str):
        self.elements.append(element)

    def text(self, x, y, s, anchor="middle", size=11, cls="label", rotate=None):
        rot = f' transform="rotate({rotate} {_num(x)} {_num(y)})"' if rotate is not None else ""
        self.add(f'<text class="{cls}" x="{_num(x)}" y="{_num(y)}" font-size="{size}" '
                 f'text-anchor="{anchor}"{rot}>{escape(str(s))}</text>')

    def _axes(self, title, xlabel, ylabel):
        self.add(f'<g class="axes" stroke="#333" stroke-width="1">'
                 f'<line x1="{self.x0}" y1="{self.y0}" x2="{self.x1}" y2="{self.y0}"/>'
                 f'<line x1="{self.x0}" y1="{self.y0}" x2="{self.x0}" y2="{self.y1}"/></g>')
        for v in _ticks(*self.ylim):
            y = self.sy(v)
            self.add(f'<line class="tick" x1="{self.x0 - 4}" y1="{_num(y)}" x2="{self.x0}" y2="{_num(y)}" stroke="#333"/>')
            self.text(self.x0 - 6, y + 4, _tick_label(v), anchor="end", size=10, cls="tick-label")
        self.text(WIDTH / 2, 22, title, size=14, cls="title")
        self.text(WIDTH / 2, HEIGHT - 12, xlabel)
        self.text(16, (self.y0 + self.y1) / 2, ylabel, rotate=-90)

    def x_ticks(self, values=None, labels=None):
        values = _ticks(*self.xlim) if values is None else values
        labels = [_tick_label(v) for v in values] if labels is None else labels
        for v, s in zip(values, labels):
            x = self.sx(v)
            self.add(f'<line class="tick" x1="{_num(x)}" y1="{self.y0}" x2="{_num(x)}" y2="{self.y0 + 4}" stroke="#333"/>')
            self.text(x, self.y0 + 16, s, size=10, cls="tick-label")

    def to_svg(self) -> str:
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
                f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">')
        bg = f'<rect class="background" x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>'
        return "\n".join([head, bg, *self.elements, "</svg>"]) + "\n"


def _legend(c: Canvas, entries):
    x = c.x1 - 150
    for k, (name, color) in enumerate(entries):
        y = c.y1 + 6 + 16 * k
        c.add(f'<rect class="legend" x="{_num(x)}" y="{_num(y)}" width="10" height="10" fill="{color}"/>')
        c.text(x + 16, y + 9, name, anchor="start", size=10, cls="legend-label")


def _bar(c: Canvas, x_center, width, value, color, cls="bar"):
    y_top, y_base = c.sy(max(value, 0.0)), c.sy(0.0)
    h = abs(y_base - y_top)
    c.add(f'<rect class="{cls}" x="{_num(c.sx(x_center) - width / 2)}" y="{_num(min(y_top, y_base))}" '
          f'width="{_num(width)}" height="{_num(h)}" fill="{color}"/>')


def _slot_width(c: Canvas, n: int) -> float:
    return (c.x1 - c.x0) / max(n, 1)


def _node_ticks(c: Canvas, ids):
    if len(ids) <= 30:
        c.x_ticks(list(range(len(ids))), list(ids))


def threshold_svg(rows: list) -> str:
    """Bars of best validation F1 per node; circles mark the tuned threshold (right axis)."""
    ids = [r["node_id"] for r in rows]
    f1 = [float(r["val_f1"]) for r in rows]
    tau = [float(r["threshold"]) for r in rows]
    c = Canvas("Per-node threshold tuning", (-0.5, max(len(rows), 1) - 0.5), (0.0, 1.05), "node", "best validation F1")
    _node_ticks(c, ids)
    tau_hi = max(tau) * 1.05 if tau and max(tau) > 0 else 1.0
    for v in _ticks(0.0, tau_hi):
        y = c.sy(v / tau_hi * 1.05)
        c.text(c.x1 + 6, y + 4, _tick_label(v), anchor="start", size=10, cls="tick-label")
    c.text(WIDTH - 14, (c.y0 + c.y1) / 2, "threshold", rotate=90)
    w = 0.6 * _slot_width(c, len(rows))
    for k in range(len(rows)):
        _bar(c, k, w, f1[k], COLORS[0])
    for k in range(len(rows)):
        y = c.sy(tau[k] / tau_hi * 1.05)
        c.add(f'<circle class="point" cx="{_num(c.sx(k))}" cy="{_num(y)}" r="3.5" fill="{COLORS[1]}"/>')
    _legend(c, [("validation F1", COLORS[0]), ("threshold", COLORS[1])])
    return c.to_svg()


def degree_scatter_svg(rows: list) -> str:
    """F1 gain of the graph model over the graph-free model against node degree."""
    pts = [(float(r["degree"]), float(r["delta_f1"])) for r in rows if r.get("delta_f1", "") != ""]
    xlim = _limits([p[0] for p in pts], floor=0.0)
    ylim = _limits([p[1] for p in pts] + [0.0])
    c = Canvas("F1 improvement vs node degree", xlim, ylim, "degree", "F1(graph) - F1(no graph)")
    c.x_ticks()
    y0 = c.sy(0.0)
    c.add(f'<line class="zero" x1="{c.x0}" y1="{_num(y0)}" x2="{c.x1}" y2="{_num(y0)}" '
          f'stroke="#999" stroke-dasharray="4 3"/>')
    for x, y in pts:
        c.add(f'<circle class="point" cx="{_num(c.sx(x))}" cy="{_num(c.sy(y))}" r="4" fill="{COLORS[0]}"/>')
    return c.to_svg()


def anomaly_counts_svg(rows: list) -> str:
    """Labeled anomalies per node in the training and test ranges."""
    ids = [r["node_id"] for r in rows]
    train = [int(r["train"]) for r in rows]
    test = [int(r["test"]) for r in rows]
    top = max(train + test + [1])
    c = Canvas("Anomalies per node", (-0.5, max(len(rows), 1) - 0.5), (0.0, top * 1.1), "node", "labeled anomalies")
    _node_ticks(c, ids)
    w = 0.35 * _slot_width(c, len(rows))
    for k in range(len(rows)):
        _bar(c, k - 0.2, w, train[k], COLORS[0])
        _bar(c, k + 0.2, w, test[k], COLORS[1])
    _legend(c, [("train", COLORS[0]), ("test", COLORS[1])])
    return c.to_svg()


def forecast_svg(rows: list) -> str:
    """Observed values and one-step forecasts of one node; flagged points circled."""
    t = [float(r["timestamp"]) for r in rows]
    actual = [float(r["actual"]) if r["actual"] != "" else None for r in rows]
    fc = [float(r["forecast"]) for r in rows]
    node = rows[0]["node_id"] if rows else ""
    c = Canvas(f"Forecast vs actual ({node})" if node else "Forecast vs actual",
               _limits(t, pad=0.0), _limits(actual + fc), "time", "value")
    c.x_ticks()
    for series, color, cls in ((actual, COLORS[0], "actual"), (fc, COLORS[1], "forecast")):
        pts = " ".join(f"{_num(c.sx(x))},{_num(c.sy(y))}" for x, y in zip(t, series) if y is not None)
        if pts:
            c.add(f'<polyline class="{cls}" points="{pts}" fill="none" stroke="{color}" stroke-width="1.2"/>')
    for r, x, y in zip(rows, t, actual):
        if y is None:
            continue
        if r["label"] == "1":
            c.add(f'<circle class="label" cx="{_num(c.sx(x))}" cy="{_num(c.sy(y))}" r="6" fill="none" '
                  f'stroke="{COLORS[2]}" stroke-width="1.5"/>')
        if r["flagged"] == "1":
            c.add(f'<circle class="flag" cx="{_num(c.sx(x))}" cy="{_num(c.sy(y))}" r="3.5" fill="{COLORS[3]}"/>')
    _legend(c, [("actual", COLORS[0]), ("forecast", COLORS[1]), ("labeled", COLORS[2]), ("flagged", COLORS[3])])
    return c.to_svg()


FIGURES = (
    ("thresholds.csv", "threshold_tuning.svg", threshold_svg),
    ("degree_improvement.csv", "f1_vs_degree.svg", degree_scatter_svg),
    ("anomaly_counts.csv", "anomaly_counts.svg", anomaly_counts_svg),
    ("forecast_example.csv", "forecast_vs_actual.svg", forecast_svg),
)


def read_rows(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def emit_plots(report_dir) -> list:
    """Render every figure whose source CSV exists in ``report_dir``; returns written paths."""
    report_dir = Path(report_dir)
    out = report_dir / "plots"
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for src, dst, fn in FIGURES:
        if not (report_dir / src).exists():
            continue
        with open(out / dst, "w", encoding="utf-8", newline="") as fh:
            fh.write(fn(read_rows(report_dir / src)))
        written.append(out / dst)
    return written
