"""Self-contained SVG line plots of traces and trajectories."""

from __future__ import annotations

import enum
import math
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

from ..errors import InsufficientData, UnsupportedKind
from ..solver import IterationRecord
from .io import atomic_write_text

WIDTH, HEIGHT = 640, 480
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 80, 150, 40, 60
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


class PlotKind(str, enum.Enum):
    VALUE_VS_ITER = "ValueVsIter"
    LOG_LOG_GAP = "LogLogGap"
    TRAJECTORY_2D = "Trajectory2D"


def _nice_ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / count
    mag = 10 ** math.floor(math.log10(raw))
    step = min((s * mag for s in (1, 2, 5, 10) if s * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step) * step
    ticks = []
    t = start
    while t <= hi + 1e-9 * step:
        ticks.append(round(t, 12))
        t += step
    return ticks


def _log_ticks(lo: float, hi: float) -> list[float]:
    first, last = math.floor(lo), math.ceil(hi)
    stride = max(1, (last - first) // 6)
    return [float(d) for d in range(first, last + 1, stride) if lo - 1e-9 <= d <= hi + 1e-9]


class _Canvas:
    def __init__(self, xlim, ylim, xlog: bool, ylog: bool):
        self.x0, self.x1 = xlim
        self.y0, self.y1 = ylim
        if self.x1 == self.x0:
            self.x1 = self.x0 + 1.0
        if self.y1 == self.y0:
            self.y1 = self.y0 + 1.0
        self.xlog, self.ylog = xlog, ylog
        self.parts: list[str] = []

    def px(self, x):
        return MARGIN_L + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - MARGIN_L - MARGIN_R)

    def py(self, y):
        return HEIGHT - MARGIN_B - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - MARGIN_T - MARGIN_B)

    def axes(self, xlabel: str, ylabel: str, title: str):
        left, right = MARGIN_L, WIDTH - MARGIN_R
        top, bottom = MARGIN_T, HEIGHT - MARGIN_B
        p = self.parts
        p.append(f'<rect x="{left}" y="{top}" width="{right - left}" height="{bottom - top}" fill="none" stroke="black"/>')
        xt = _log_ticks(self.x0, self.x1) if self.xlog else _nice_ticks(self.x0, self.x1)
        yt = _log_ticks(self.y0, self.y1) if self.ylog else _nice_ticks(self.y0, self.y1)
        for t in xt:
            x = self.px(t)
            label = f"1e{int(t)}" if self.xlog else f"{t:g}"
            p.append(f'<line x1="{x:.2f}" y1="{bottom}" x2="{x:.2f}" y2="{bottom + 5}" stroke="black"/>')
            p.append(f'<text x="{x:.2f}" y="{bottom + 20}" font-size="12" text-anchor="middle">{label}</text>')
        for t in yt:
            y = self.py(t)
            label = f"1e{int(t)}" if self.ylog else f"{t:g}"
            p.append(f'<line x1="{left - 5}" y1="{y:.2f}" x2="{left}" y2="{y:.2f}" stroke="black"/>')
            p.append(f'<text x="{left - 8}" y="{y + 4:.2f}" font-size="12" text-anchor="end">{label}</text>')
        p.append(f'<text x="{(left + right) / 2}" y="{HEIGHT - 15}" font-size="14" text-anchor="middle">{escape(xlabel)}</text>')
        p.append(
            f'<text x="20" y="{(top + bottom) / 2}" font-size="14" text-anchor="middle" '
            f'transform="rotate(-90 20 {(top + bottom) / 2})">{escape(ylabel)}</text>'
        )
        p.append(f'<text x="{(left + right) / 2}" y="{top - 15}" font-size="15" text-anchor="middle">{escape(title)}</text>')

    def polyline(self, xs, ys, color: str):
        pts = " ".join(f"{self.px(x):.2f},{self.py(y):.2f}" for x, y in zip(xs, ys))
        self.parts.append(f'<polyline class="series" points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')

    def marker(self, x, y, color: str):
        self.parts.append(f'<circle cx="{self.px(x):.2f}" cy="{self.py(y):.2f}" r="4" fill="{color}"/>')

    def legend(self, labels: Sequence[str]):
        x = WIDTH - MARGIN_R + 15
        for i, label in enumerate(labels):
            y = MARGIN_T + 20 * i + 10
            color = COLORS[i % len(COLORS)]
            self.parts.append(f'<line x1="{x}" y1="{y}" x2="{x + 20}" y2="{y}" stroke="{color}" stroke-width="2"/>')
            self.parts.append(f'<text x="{x + 26}" y="{y + 4}" font-size="12">{escape(label)}</text>')

    def render(self) -> str:
        body = "\n".join(self.parts)
        return (
            '<?xml version="1.0" encoding="UTF-8"?>\n'
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}">\n<rect width="100%" height="100%" fill="white"/>\n{body}\n</svg>\n'
        )


MAX_POINTS = 2000


def _thin(n: int) -> np.ndarray:
    """Indices keeping both ends, evenly and log-evenly spaced interior points."""
    if n <= 2 * MAX_POINTS:
        return np.arange(n)
    lin = np.linspace(0, n - 1, MAX_POINTS)
    geo = np.geomspace(1, n, MAX_POINTS) - 1
    return np.unique(np.concatenate([lin, geo]).astype(np.intp))


def _limits(arrays) -> tuple[float, float]:
    lo = min(float(np.min(a)) for a in arrays)
    hi = max(float(np.max(a)) for a in arrays)
    return lo, hi


def render_plot(
    traces: Sequence[Sequence[IterationRecord]] | None,
    kind: PlotKind | str,
    labels: Sequence[str] | None = None,
    f_infinity: float = 0.0,
    trajectories: Sequence[np.ndarray] | None = None,
    title: str | None = None,
) -> str:
    """SVG text for one plot; see :func:`emit_plot`."""
    kind = PlotKind(kind)
    if kind is PlotKind.TRAJECTORY_2D:
        if not trajectories:
            raise UnsupportedKind("Trajectory2D needs recorded iterates in original coordinates")
        pts = [np.asarray(t, dtype=float) for t in trajectories]
        if any(t.ndim != 2 or t.shape[1] != 2 for t in pts):
            raise UnsupportedKind("Trajectory2D requires a 2-dimensional original problem")
        if any(t.shape[0] == 0 for t in pts):
            raise InsufficientData("empty trajectory")
        series_x = [t[:, 0] for t in pts]
        series_y = [t[:, 1] for t in pts]
        xlabel, ylabel, xlog, ylog = "x1", "x2", False, False
    else:
        if not traces or any(len(t) == 0 for t in traces):
            raise InsufficientData("cannot plot an empty trace")
        series_x, series_y = [], []
        for tr in traces:
            k = np.array([r.k for r in tr], dtype=float)
            f = np.array([r.f_value for r in tr], dtype=float)
            if kind is PlotKind.LOG_LOG_GAP:
                gap = f - f_infinity
                keep = (k >= 1) & (gap > 0)
                if not np.any(keep):
                    raise InsufficientData("no points with k >= 1 and positive gap")
                k, f = np.log10(k[keep]), np.log10(gap[keep])
            series_x.append(k)
            series_y.append(f)
        xlog = ylog = kind is PlotKind.LOG_LOG_GAP
        xlabel = "iteration k"
        ylabel = "f(x_k) - f_inf" if xlog else "f(x_k)"
    n_series = len(series_x)
    labels = list(labels) if labels is not None else [f"series {i + 1}" for i in range(n_series)]
    if len(labels) != n_series:
        raise ValueError("one label per series is required")
    canvas = _Canvas(_limits(series_x), _limits(series_y), xlog, ylog)
    canvas.axes(xlabel, ylabel, title if title is not None else kind.value)
    for i, (xs, ys) in enumerate(zip(series_x, series_y)):
        color = COLORS[i % len(COLORS)]
        idx = _thin(len(xs))
        canvas.polyline(xs[idx], ys[idx], color)
        if kind is PlotKind.TRAJECTORY_2D:
            canvas.marker(xs[0], ys[0], color)
    canvas.legend(labels)
    return canvas.render()


def emit_plot(
    path: str | Path,
    traces: Sequence[Sequence[IterationRecord]] | None,
    kind: PlotKind | str,
    labels: Sequence[str] | None = None,
    f_infinity: float = 0.0,
    trajectories: Sequence[np.ndarray] | None = None,
    title: str | None = None,
) -> Path:
    """Write an SVG plot with one polyline per series.

    ValueVsIter and LogLogGap read traces; LogLogGap plots ``f - f_infinity``
    on log-log axes.  Trajectory2D draws ``trajectories``, each an ``(N, 2)``
    array of iterates in original coordinates.
    """
    return atomic_write_text(path, render_plot(traces, kind, labels, f_infinity, trajectories, title))
