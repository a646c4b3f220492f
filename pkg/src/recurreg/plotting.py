"""Event plots and cumulative-curve plots as plain data and static SVG."""

from __future__ import annotations

from dataclasses import dataclass
from datetime import timedelta
from xml.sax.saxutils import escape

import numpy as np

from .data import RecurrentDataset, level_label
from .nonparametric import McfCurve
from .stepfun import StepFunction

PALETTE = ("#000000", "#E69F00", "#56B4E9", "#009E73", "#D55E00", "#0072B2", "#CC79A7", "#F0E442")
ORDERS = ("increasing", "decreasing", "none")


class PlotError(ValueError):
    """Plot data cannot be built or drawn."""


@dataclass(frozen=True)
class PlotStyle:
    xlab: str | None = None
    ylab: str | None = None
    main: str | None = None
    terminal_name: str = "Terminal event"
    recurrent_name: str = "Recurrent events"
    recurrent_types: tuple[str, ...] = ()
    legend_position: str = "top"
    base_size: float = 12.0
    cex: float = 1.0
    alpha: float = 0.7
    width: int = 640
    height: int = 480

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if self.base_size <= 0:
            raise ValueError("base_size must be positive")

    def type_label(self, k: int, n_types: int) -> str:
        if k - 1 < len(self.recurrent_types):
            return self.recurrent_types[k - 1]
        return self.recurrent_name if n_types == 1 else f"{self.recurrent_name} type {k}"


@dataclass(frozen=True)
class EventRow:
    id: str
    rank: int
    segment: tuple[float, float]
    marks: tuple[tuple[float, int], ...]
    terminal: float | None
    group: str = ""


@dataclass(frozen=True)
class EventPlotData:
    rows: tuple[EventRow, ...]
    axis: str = "person"
    event_types: tuple[int, ...] = (1,)
    has_terminal: bool = False
    groups: tuple[str, ...] = ("",)
    group_by: str | None = None
    date_origin: object = None

    @property
    def n_marks(self) -> int:
        return sum(len(r.marks) for r in self.rows)

    @property
    def n_terminal(self) -> int:
        return sum(r.terminal is not None for r in self.rows)

    def legend(self, style: PlotStyle | None = None) -> list[str]:
        style = style or PlotStyle()
        out = [style.type_label(k, len(self.event_types)) for k in self.event_types]
        if self.has_terminal:
            out.append(style.terminal_name)
        return out

    def to_dict(self) -> dict:
        return {
            "kind": "events",
            "axis": self.axis,
            "group_by": self.group_by,
            "groups": list(self.groups),
            "event_types": list(self.event_types),
            "legend": self.legend(),
            "rows": [
                {
                    "id": r.id,
                    "rank": r.rank,
                    "group": r.group,
                    "segment": list(r.segment),
                    "marks": [{"time": t, "type": k} for t, k in r.marks],
                    "terminal": r.terminal,
                }
                for r in self.rows
            ],
        }


def _ranks(keys: np.ndarray, order: str) -> np.ndarray:
    n = keys.size
    if order == "none":
        return np.arange(1, n + 1)
    pos = np.argsort(keys, kind="stable")
    inc = np.empty(n, dtype=int)
    inc[pos] = np.arange(1, n + 1)
    return inc if order == "increasing" else n + 1 - inc


def event_plot_data(
    dataset: RecurrentDataset, group_by: str | None = None, order: str = "increasing", calendar: bool = False
) -> EventPlotData:
    """One row per subject, ranked bottom (1) to top within each group.

    ``increasing`` puts the longest follow-up on top. In calendar mode each
    segment runs from the subject origin to its end of follow-up and rows
    are ranked by that end date.
    """
    if order not in ORDERS:
        raise PlotError(f"order must be one of {ORDERS}")
    if dataset.n == 0:
        raise PlotError("dataset has no subjects")
    if group_by is not None:
        try:
            g = dataset.covariate(group_by)
        except KeyError as exc:
            raise PlotError(str(exc)) from None
        levels = np.unique(g)
        if levels.size > 20:
            raise PlotError(f"covariate {group_by!r} has {levels.size} levels; too many to panel")
        labels = [level_label(v) for v in g]
        groups = tuple(level_label(v) for v in levels)
    else:
        labels = [""] * dataset.n
        groups = ("",)
    shift = np.array([s.origin for s in dataset.subjects]) if calendar else np.zeros(dataset.n)
    keys = dataset.followup + shift
    ranks = np.zeros(dataset.n, dtype=int)
    for lab in groups:
        idx = np.array([i for i in range(dataset.n) if labels[i] == lab])
        ranks[idx] = _ranks(keys[idx], order)
    rows = []
    types = set()
    for i, s in enumerate(dataset.subjects):
        off = s.origin - shift[i]
        marks = tuple((float(iv.stop - off), int(iv.event_type)) for iv in s.intervals if iv.event_type >= 1)
        types.update(k for _, k in marks)
        end = float(s.followup + shift[i])
        rows.append(EventRow(s.id, int(ranks[i]), (float(shift[i]), end), marks, end if s.terminal else None, labels[i]))
    return EventPlotData(
        tuple(rows), "calendar" if calendar else "person", tuple(sorted(types)) or (1,),
        bool(dataset.terminal.any()), groups, group_by, dataset.date_origin if calendar else None,
    )


@dataclass(frozen=True)
class CurveSet:
    curves: tuple[McfCurve, ...]
    legend_title: str = ""
    labels: tuple[str, ...] = ()
    time_unit: str | None = None

    def to_dict(self) -> dict:
        return {
            "kind": "curves",
            "legend_title": self.legend_title,
            "labels": list(self.labels),
            "time_unit": self.time_unit,
            "curves": [dict(c.to_dict(), label=lab) for c, lab in zip(self.curves, self.labels)],
        }


def combine_curves(curves, legend_title: str = "", legend_labels=None, time_units=None) -> CurveSet:
    """Overlay several curves on shared axes with one legend entry each."""
    curves = tuple(curves)
    if not curves:
        raise PlotError("need at least one curve")
    if legend_labels is None:
        labels = tuple(c.label or f"curve {k + 1}" for k, c in enumerate(curves))
    else:
        labels = tuple(str(v) for v in legend_labels)
        if len(labels) != len(curves):
            raise PlotError(f"{len(labels)} legend labels for {len(curves)} curves")
    unit = None
    if time_units is not None:
        units = set(time_units)
        if len(units) > 1:
            raise PlotError(f"curves use different time units: {sorted(units)}")
        unit = units.pop() if units else None
    return CurveSet(curves, legend_title, labels, unit)


def as_curve(f: StepFunction, label: str = "") -> McfCurve:
    return McfCurve(f, label=label)


# ---------------------------------------------------------------------------
# SVG


def _fmt(v: float) -> str:
    return f"{v:.2f}".rstrip("0").rstrip(".")


def _nice_ticks(lo: float, hi: float, k: int = 5) -> np.ndarray:
    span = hi - lo
    raw = span / k
    mag = 10 ** np.floor(np.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=raw)
    start = np.ceil(lo / step - 1e-9) * step
    return np.arange(start, hi + step * 1e-6, step)


class _Frame:
    def __init__(self, x0, y0, w, h, xlim, ylim):
        self.x0, self.y0, self.w, self.h = x0, y0, w, h
        self.xlim, self.ylim = xlim, ylim
        if not xlim[1] > xlim[0] or not ylim[1] > ylim[0]:
            raise PlotError("zero-extent axis range")

    def x(self, v):
        return self.x0 + (v - self.xlim[0]) / (self.xlim[1] - self.xlim[0]) * self.w

    def y(self, v):
        return self.y0 + self.h - (v - self.ylim[0]) / (self.ylim[1] - self.ylim[0]) * self.h


def _axes(fr: _Frame, style: PlotStyle, xlabels=None, yticks=True) -> list[str]:
    fs = style.base_size
    xt = _nice_ticks(*fr.xlim)
    d = f"M{_fmt(fr.x0)},{_fmt(fr.y0)} V{_fmt(fr.y0 + fr.h)} H{_fmt(fr.x0 + fr.w)}"
    for t in xt:
        d += f" M{_fmt(fr.x(t))},{_fmt(fr.y0 + fr.h)} v5"
    out = [f'<path class="axis" d="{d}" stroke="#333333" fill="none"/>']
    for t in xt:
        lab = xlabels(t) if xlabels else _fmt(t)
        out.append(
            f'<text x="{_fmt(fr.x(t))}" y="{_fmt(fr.y0 + fr.h + 5 + fs)}" font-size="{_fmt(fs * 0.8)}" '
            f'text-anchor="middle">{escape(lab)}</text>'
        )
    if yticks:
        yt = _nice_ticks(*fr.ylim)
        d = "".join(f" M{_fmt(fr.x0)},{_fmt(fr.y(t))} h-5" for t in yt)
        out.append(f'<path class="axis" d="{d.strip()}" stroke="#333333" fill="none"/>')
        for t in yt:
            out.append(
                f'<text x="{_fmt(fr.x0 - 8)}" y="{_fmt(fr.y(t) + fs * 0.3)}" font-size="{_fmt(fs * 0.8)}" '
                f'text-anchor="end">{_fmt(t)}</text>'
            )
    return out


def _circle_path(cx, cy, r) -> str:
    return f"M{_fmt(cx - r)},{_fmt(cy)} a{_fmt(r)},{_fmt(r)} 0 1,0 {_fmt(2 * r)},0 a{_fmt(r)},{_fmt(r)} 0 1,0 {_fmt(-2 * r)},0"


def _triangle(cx, cy, r) -> str:
    return f"{_fmt(cx)},{_fmt(cy - r)} {_fmt(cx - r)},{_fmt(cy + r * 0.8)} {_fmt(cx + r)},{_fmt(cy + r * 0.8)}"


def _header(style: PlotStyle) -> list[str]:
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{style.width}" height="{style.height}" '
        f'viewBox="0 0 {style.width} {style.height}" font-family="sans-serif">',
        f'<rect x="0" y="0" width="{style.width}" height="{style.height}" fill="#ffffff"/>',
    ]
    if style.main:
        out.append(
            f'<text x="{style.width / 2:.1f}" y="{style.base_size * 1.6:.1f}" font-size="{_fmt(style.base_size * 1.2)}" '
            f'text-anchor="middle">{escape(style.main)}</text>'
        )
    return out


def _labels(style: PlotStyle, xlab: str, ylab: str) -> list[str]:
    fs = style.base_size
    return [
        f'<text x="{style.width / 2:.1f}" y="{style.height - fs * 0.6:.1f}" font-size="{_fmt(fs)}" '
        f'text-anchor="middle">{escape(xlab)}</text>',
        f'<text x="{fs * 1.2:.1f}" y="{style.height / 2:.1f}" font-size="{_fmt(fs)}" text-anchor="middle" '
        f'transform="rotate(-90 {fs * 1.2:.1f} {style.height / 2:.1f})">{escape(ylab)}</text>',
    ]


def _legend(entries, style: PlotStyle, title: str = "") -> list[str]:
    """``entries`` are ``(label, kind, color)`` with kind circle, triangle or line."""
    fs = style.base_size
    x, y = 60.0, (style.base_size * 3.2 if style.main else style.base_size * 1.6)
    out = ['<g class="legend">']
    if title:
        out.append(f'<text x="{_fmt(x)}" y="{_fmt(y + fs * 0.35)}" font-size="{_fmt(fs * 0.85)}" font-weight="bold">{escape(title)}</text>')
        x += fs * 0.6 * (len(title) + 2)
    for label, kind, color in entries:
        r = 4 * style.cex
        if kind == "circle":
            out.append(f'<path d="{_circle_path(x, y, r)}" fill="{color}" fill-opacity="{style.alpha}"/>')
        elif kind == "triangle":
            out.append(f'<path d="M{_triangle(x, y, r).replace(" ", " L")} Z" fill="{color}"/>')
        else:
            out.append(f'<path d="M{_fmt(x - 8)},{_fmt(y)} h16" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{_fmt(x + 12)}" y="{_fmt(y + fs * 0.35)}" font-size="{_fmt(fs * 0.85)}">{escape(label)}</text>')
        x += 24 + fs * 0.55 * len(label)
    out.append("</g>")
    return out


def _render_events(data: EventPlotData, style: PlotStyle) -> str:
    out = _header(style)
    top = style.base_size * (4.5 if style.main else 3.2)
    left, right, bottom = 60.0, 20.0, 50.0
    groups = data.groups
    gap = 20.0
    pw = (style.width - left - right - gap * (len(groups) - 1)) / len(groups)
    ph = style.height - top - bottom
    lo = min(r.segment[0] for r in data.rows)
    hi = max(r.segment[1] for r in data.rows)
    if not hi > lo:
        raise PlotError("zero-extent axis range")
    xlabels = None
    if data.axis == "calendar" and data.date_origin is not None:
        origin = data.date_origin

        def xlabels(t):
            return (origin + timedelta(days=float(t))).date().isoformat()

    colors = {k: PALETTE[(i + 1) % len(PALETTE)] for i, k in enumerate(data.event_types)}
    r = 3.5 * style.cex
    for gi, g in enumerate(groups):
        rows = [row for row in data.rows if row.group == g]
        fr = _Frame(left + gi * (pw + gap), top, pw, ph, (min(lo, 0.0) if data.axis == "person" else lo, hi), (0.5, len(rows) + 0.5))
        out.append(f'<g class="panel" data-group="{escape(g)}">')
        if data.group_by is not None:
            out.append(
                f'<text x="{_fmt(fr.x0 + pw / 2)}" y="{_fmt(top - 4)}" font-size="{_fmt(style.base_size * 0.85)}" '
                f'text-anchor="middle">{escape(f"{data.group_by} = {g}")}</text>'
            )
        out += _axes(fr, style, xlabels, yticks=False)
        for row in sorted(rows, key=lambda rw: rw.rank):
            y = fr.y(row.rank)
            out.append(
                f'<line x1="{_fmt(fr.x(row.segment[0]))}" y1="{_fmt(y)}" x2="{_fmt(fr.x(row.segment[1]))}" y2="{_fmt(y)}" '
                f'stroke="#9e9e9e" stroke-width="1"/>'
            )
        for row in rows:
            y = fr.y(row.rank)
            for t, k in row.marks:
                out.append(
                    f'<circle cx="{_fmt(fr.x(t))}" cy="{_fmt(y)}" r="{_fmt(r)}" fill="{colors[k]}" fill-opacity="{style.alpha}"/>'
                )
            if row.terminal is not None:
                out.append(f'<polygon points="{_triangle(fr.x(row.terminal), y, r * 1.2)}" fill="#C00000"/>')
        out.append("</g>")
    entries = [(style.type_label(k, len(data.event_types)), "circle", colors[k]) for k in data.event_types]
    if data.has_terminal:
        entries.append((style.terminal_name, "triangle", "#C00000"))
    out += _legend(entries, style)
    default_x = "Calendar time" if data.axis == "calendar" else "Time"
    out += _labels(style, style.xlab or default_x, style.ylab or "Subject")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _step_points(f: StepFunction, x_start: float, fr: _Frame) -> list[tuple[float, float]]:
    pts = [(x_start, f.value_before_first_knot)]
    prev = f.value_before_first_knot
    for t, v in zip(f.knots, f.values):
        pts.append((t, prev))
        pts.append((t, v))
        prev = v
    return [(fr.x(a), fr.y(b)) for a, b in pts]


def _render_curves(cs: CurveSet, style: PlotStyle) -> str:
    out = _header(style)
    top = style.base_size * (4.5 if style.main else 3.2)
    left, right, bottom = 60.0, 20.0, 50.0
    knots = [c.estimate.knots for c in cs.curves]
    allk = np.concatenate(knots) if knots else np.empty(0)
    if allk.size == 0:
        raise PlotError("curves have no knots")
    xlo = min(0.0, float(allk.min()))
    xhi = float(allk.max())
    ymax = 0.0
    for c in cs.curves:
        top_curve = c.upper if c.upper is not None else c.estimate
        ymax = max(ymax, float(np.max(top_curve.values, initial=0.0)), top_curve.value_before_first_knot)
    ymin = min(0.0, min(float(np.min(c.estimate.values, initial=0.0)) for c in cs.curves))
    if ymax <= ymin:
        ymax = ymin + 1.0
    fr = _Frame(left, top, style.width - left - right, style.height - top - bottom, (xlo, xhi), (ymin, ymax * 1.04))
    out += _axes(fr, style)
    entries = []
    for k, (c, lab) in enumerate(zip(cs.curves, cs.labels)):
        color = PALETTE[k % len(PALETTE)]
        if c.lower is not None and c.upper is not None:
            grid = c.estimate
            up = c.upper.on_grid(grid.knots)
            lo_ = c.lower.on_grid(grid.knots)
            upper_pts = _step_points(up, xlo, fr)
            lower_pts = _step_points(lo_, xlo, fr)[::-1]
            pts = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in upper_pts + lower_pts)
            out.append(f'<polygon class="band" points="{pts}" fill="{color}" fill-opacity="{round(style.alpha * 0.3, 3)}" stroke="none"/>')
        pts = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in _step_points(c.estimate, xlo, fr))
        out.append(f'<polyline class="curve" points="{pts}" fill="none" stroke="{color}" stroke-width="1.5" stroke-opacity="{style.alpha}"/>')
        entries.append((lab, "line", color))
    if len(cs.curves) > 1 or cs.legend_title:
        out += _legend(entries, style, cs.legend_title)
    xlab = style.xlab or ("Time" if cs.time_unit is None else f"Time ({cs.time_unit})")
    out += _labels(style, xlab, style.ylab or "Cumulative mean")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_svg(data, style: PlotStyle | None = None) -> str:
    """Standalone SVG 1.1 document for event-plot data, a curve set or a single curve."""
    style = style or PlotStyle()
    if isinstance(data, EventPlotData):
        if not data.rows:
            raise PlotError("nothing to draw")
        return _render_events(data, style)
    if isinstance(data, McfCurve):
        data = combine_curves([data])
    elif isinstance(data, StepFunction):
        data = combine_curves([as_curve(data)])
    if isinstance(data, CurveSet):
        return _render_curves(data, style)
    raise TypeError(f"cannot render {type(data).__name__}")
