"""CSV / JSON artifact I/O and dependency-free SVG figures.

All writers are byte-deterministic: floats use 6 significant digits, files are
UTF-8 with LF endings, JSON keys are sorted.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

from .engine import TRACE_HEADER
from .experiments import TABLE_HEADER, ExperimentTable, Row
from .search import TRAJECTORY_HEADER, SearchOutcome, Step
from .model import FactorVector


class SchemaError(ValueError):
    pass


def _opt_int(text: str) -> Optional[int]:
    return None if text == "" else int(text)


@dataclass(frozen=True)
class Schema:
    name: str
    columns: tuple[str, ...]
    types: tuple  # one parser per column

    def parse(self, record: Sequence[str]) -> tuple:
        return tuple(t(v) for t, v in zip(self.types, record))


TRACE_SCHEMA = Schema("trace", TRACE_HEADER, (int, int, int, str, str, int, int, _opt_int, _opt_int))
TABLE_SCHEMA = Schema("experiment", TABLE_HEADER, (str, float, str, _opt_int) + (float,) * 7 + (int,))
TRAJECTORY_SCHEMA = Schema("trajectory", TRAJECTORY_HEADER, (int, int) + (float,) * 6)


def format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        text = format(value, ".6g")
        return "0" if text == "-0" else text
    return str(value)


def csv_text(rows: Iterable[Sequence], schema: Schema) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(schema.columns)
    for row in rows:
        if len(row) != len(schema.columns):
            raise SchemaError(f"{schema.name} row has {len(row)} fields, expected {len(schema.columns)}")
        writer.writerow([format_value(v) for v in row])
    return buf.getvalue()


def write_csv(path: Union[str, Path], rows: Iterable[Sequence], schema: Schema) -> None:
    Path(path).write_bytes(csv_text(rows, schema).encode("utf-8"))


def read_csv(path: Union[str, Path], schema: Schema) -> list[tuple]:
    text = Path(path).read_bytes().decode("utf-8")
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError(f"{path}: empty file, expected {schema.name} header") from None
    for i, expected in enumerate(schema.columns):
        got = header[i] if i < len(header) else None
        if got != expected:
            raise SchemaError(f"{path}: column {i + 1} is {got!r}, expected {expected!r} ({schema.name} schema)")
    if len(header) > len(schema.columns):
        raise SchemaError(f"{path}: unexpected extra column {header[len(schema.columns)]!r}")
    return [schema.parse(r) for r in reader if r]


def table_rows(table: ExperimentTable) -> list[tuple]:
    return [r.as_tuple() for r in table.rows]


def write_table(path: Union[str, Path], table: ExperimentTable) -> None:
    write_csv(path, table_rows(table), TABLE_SCHEMA)


def read_table(path: Union[str, Path]) -> ExperimentTable:
    return ExperimentTable(rows=[Row(*r) for r in read_csv(path, TABLE_SCHEMA)])


def trajectory_rows(outcome: SearchOutcome) -> list[tuple]:
    rows = []
    for s in outcome.trajectory:
        g, skill, acad, integ = s.point.as_tuple()
        rows.append((s.search_id, s.evaluation, g, acad, skill, integ, s.fitness, s.best_so_far))
    return rows


def read_trajectory(path: Union[str, Path]) -> list[Step]:
    steps = []
    for sid, ev, g, acad, skill, integ, fit, best in read_csv(path, TRAJECTORY_SCHEMA):
        steps.append(Step(sid, ev, FactorVector(g, skill, acad, integ), fit, best))
    return steps


def json_text(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def write_json(path: Union[str, Path], obj) -> None:
    Path(path).write_bytes(json_text(obj).encode("utf-8"))


# --- SVG -------------------------------------------------------------------

class PlotKind(str, Enum):
    PER_YEAR_LINES = "per-year"
    GRADUATED_DEPARTED_LINES = "graduated-departed"
    SENSITIVITY_BOXPLOT = "sensitivity"
    SEARCH_TRAJECTORY = "trajectory"


@dataclass(frozen=True)
class PlotSpec:
    kind: PlotKind
    title: str = ""
    x_label: str = ""
    y_label: str = ""
    series: Optional[tuple[str, ...]] = None
    output: Optional[Path] = None


COLORS = ("#000000", "#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2",
          "#7f7f7f", "#bcbd22")
WIDTH, HEIGHT = 760, 480
LEFT, RIGHT, TOP, BOTTOM = 70, 190, 50, 60


def _esc(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;")


def _f(x: float) -> str:
    return f"{x:.2f}"


def _nice_max(v: float) -> float:
    if v <= 0:
        return 1.0
    for step in (1, 2, 2.5, 5, 10, 20, 25, 50, 100, 200, 250, 500, 1000):
        top = step * 5
        if top >= v * 1.05:
            return float(top)
    return v * 1.1


class _Canvas:
    def __init__(self, spec: PlotSpec, x_range: tuple[float, float], y_range: tuple[float, float]):
        self.spec = spec
        self.x0, self.x1 = x_range
        self.y0, self.y1 = y_range
        self.parts: list[str] = []
        self.legend: list[tuple[str, str]] = []

    def px(self, x: float) -> float:
        span = self.x1 - self.x0 or 1.0
        return LEFT + (x - self.x0) / span * (WIDTH - LEFT - RIGHT)

    def py(self, y: float) -> float:
        span = self.y1 - self.y0 or 1.0
        return HEIGHT - BOTTOM - (y - self.y0) / span * (HEIGHT - TOP - BOTTOM)

    def axes(self, x_ticks: Sequence[tuple[float, str]]) -> None:
        p = self.parts
        for i in range(6):
            v = self.y0 + (self.y1 - self.y0) * i / 5
            y = self.py(v)
            p.append(f'<line x1="{LEFT}" y1="{_f(y)}" x2="{WIDTH - RIGHT}" y2="{_f(y)}" stroke="#dddddd"/>')
            p.append(f'<text x="{LEFT - 8}" y="{_f(y + 4)}" text-anchor="end" font-size="11">{format(v, ".4g")}</text>')
        base = HEIGHT - BOTTOM
        p.append(f'<line x1="{LEFT}" y1="{base}" x2="{WIDTH - RIGHT}" y2="{base}" stroke="#000000"/>')
        p.append(f'<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{base}" stroke="#000000"/>')
        for v, label in x_ticks:
            x = self.px(v)
            p.append(f'<line x1="{_f(x)}" y1="{base}" x2="{_f(x)}" y2="{base + 5}" stroke="#000000"/>')
            p.append(f'<text x="{_f(x)}" y="{base + 18}" text-anchor="middle" font-size="11">{_esc(label)}</text>')
        s = self.spec
        p.append(f'<text x="{WIDTH / 2:.2f}" y="28" text-anchor="middle" font-size="16">{_esc(s.title)}</text>')
        p.append(f'<text x="{(LEFT + WIDTH - RIGHT) / 2:.2f}" y="{HEIGHT - 16}" text-anchor="middle" '
                 f'font-size="12">{_esc(s.x_label)}</text>')
        p.append(f'<text x="18" y="{(TOP + HEIGHT - BOTTOM) / 2:.2f}" text-anchor="middle" font-size="12" '
                 f'transform="rotate(-90 18 {(TOP + HEIGHT - BOTTOM) / 2:.2f})">{_esc(s.y_label)}</text>')

    def line(self, label: str, color: str, pts: Sequence[tuple[float, float]], markers: bool = True) -> None:
        coords = " ".join(f"{_f(self.px(x))},{_f(self.py(y))}" for x, y in pts)
        self.parts.append(f'<polyline class="series" data-series="{_esc(label)}" fill="none" stroke="{color}" '
                          f'stroke-width="2" points="{coords}"/>')
        if markers:
            for x, y in pts:
                self.parts.append(f'<circle class="marker" cx="{_f(self.px(x))}" cy="{_f(self.py(y))}" r="3" '
                                  f'fill="{color}"/>')
        self.legend.append((label, color))

    def document(self) -> str:
        out = [
            '<?xml version="1.0" encoding="UTF-8"?>',
            f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="Helvetica, Arial, sans-serif">',
            f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>',
        ]
        out.extend(self.parts)
        lx = WIDTH - RIGHT + 16
        for i, (label, color) in enumerate(self.legend):
            ly = TOP + 10 + 20 * i
            out.append(f'<rect class="legend" x="{lx}" y="{ly - 6}" width="18" height="4" fill="{color}"/>')
            out.append(f'<text x="{lx + 24}" y="{ly}" font-size="11">{_esc(label)}</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"


def _series_key(row: Row) -> str:
    return row.metric if row.year is None else f"{row.metric}:{row.year}"


def _table_series(table: ExperimentTable, wanted: Sequence[str]) -> dict[tuple[str, str], list[tuple[float, float]]]:
    available = sorted({_series_key(r) for r in table.rows})
    for name in wanted:
        if name not in available:
            raise ValueError(f"unknown series {name!r}; table provides: {', '.join(available)}")
    out: dict[tuple[str, str], list[tuple[float, float]]] = {}
    for r in table.rows:
        key = _series_key(r)
        if key in wanted:
            out.setdefault((r.factor, key), []).append((r.level, r.mean))
    return {k: sorted(v) for k, v in out.items()}


def _level_ticks(levels: Sequence[float]) -> list[tuple[float, str]]:
    return [(lv, format(lv, ".3g")) for lv in levels]


def _render_lines(table: ExperimentTable, spec: PlotSpec, default: tuple[str, ...]) -> str:
    series = _table_series(table, spec.series or default)
    levels = table.levels
    ymax = _nice_max(max(y for pts in series.values() for _, y in pts))
    lo, hi = (levels[0], levels[-1]) if len(levels) > 1 else (levels[0] - 0.05, levels[0] + 0.05)
    c = _Canvas(spec, (lo, hi), (0.0, ymax))
    c.axes(_level_ticks(levels))
    multi = len({f for f, _ in series}) > 1
    for i, ((factor, key), pts) in enumerate(sorted(series.items(), key=lambda kv: kv[0])):
        label = f"{factor} {key}" if multi else key
        c.line(label, COLORS[i % len(COLORS)], pts)
    return c.document()


def _render_boxplot(table: ExperimentTable, spec: PlotSpec) -> str:
    metric = (spec.series or ("quitters",))[0]
    rows = [r for r in table.rows if _series_key(r) == metric]
    if not rows:
        available = sorted({_series_key(r) for r in table.rows})
        raise ValueError(f"unknown series {metric!r}; table provides: {', '.join(available)}")
    by_factor: dict[str, list[Row]] = {}
    for r in rows:
        by_factor.setdefault(r.factor, []).append(r)
    factors = list(by_factor)
    ymax = _nice_max(max(r.max for r in rows))
    c = _Canvas(spec, (-0.5, len(factors) - 0.5), (0.0, ymax))
    c.axes([(i, f) for i, f in enumerate(factors)])
    half = 0.18 * (WIDTH - LEFT - RIGHT) / max(len(factors), 1)
    for i, factor in enumerate(factors):
        group = sorted(by_factor[factor], key=lambda r: r.level)
        center = group[len(group) // 2]
        x = c.px(i)
        color = COLORS[(i + 1) % len(COLORS)]
        top, bot = c.py(center.q3), c.py(center.q1)
        p = c.parts
        p.append(f'<line class="whisker" x1="{_f(x)}" y1="{_f(c.py(center.max))}" x2="{_f(x)}" '
                 f'y2="{_f(c.py(center.min))}" stroke="{color}"/>')
        for v in (center.min, center.max):
            p.append(f'<line class="whisker-cap" x1="{_f(x - half / 2)}" y1="{_f(c.py(v))}" x2="{_f(x + half / 2)}" '
                     f'y2="{_f(c.py(v))}" stroke="{color}"/>')
        p.append(f'<rect class="box" x="{_f(x - half)}" y="{_f(top)}" width="{_f(2 * half)}" '
                 f'height="{_f(bot - top)}" fill="#ffffff" stroke="{color}" stroke-width="1.5"/>')
        p.append(f'<line class="median" x1="{_f(x - half)}" y1="{_f(c.py(center.median))}" x2="{_f(x + half)}" '
                 f'y2="{_f(c.py(center.median))}" stroke="{color}" stroke-width="2"/>')
        means = [r.mean for r in group]
        ex = x + half + 8
        lo, hi = c.py(min(means)), c.py(max(means))
        p.append(f'<line class="errorbar" x1="{_f(ex)}" y1="{_f(hi)}" x2="{_f(ex)}" y2="{_f(lo)}" stroke="#000000"/>')
        for y in (lo, hi):
            p.append(f'<line class="errorbar-cap" x1="{_f(ex - 4)}" y1="{_f(y)}" x2="{_f(ex + 4)}" y2="{_f(y)}" '
                     f'stroke="#000000"/>')
        p.append(f'<circle class="marker" cx="{_f(x)}" cy="{_f(c.py(center.mean))}" r="3" fill="{color}"/>')
        c.legend.append((f"{factor} @ {format(center.level, '.3g')}", color))
    c.legend.append(("+/-10% mean range", "#000000"))
    return c.document()


def _render_trajectory(steps: Sequence[Step], spec: PlotSpec) -> str:
    by_search: dict[int, list[tuple[float, float]]] = {}
    for s in steps:
        by_search.setdefault(s.search_id, []).append((float(s.evaluation), s.best_so_far))
    if spec.series:
        known = {f"search {i}" for i in by_search}
        for name in spec.series:
            if name not in known:
                raise ValueError(f"unknown series {name!r}; trajectory provides: {', '.join(sorted(known))}")
        by_search = {i: v for i, v in by_search.items() if f"search {i}" in spec.series}
    xmax = max(x for pts in by_search.values() for x, _ in pts)
    ys = [y for pts in by_search.values() for _, y in pts]
    lo, hi = min(ys), max(ys)
    pad = max((hi - lo) * 0.1, 1.0)
    c = _Canvas(spec, (0.0, max(xmax, 1.0)), (max(lo - pad, 0.0), hi + pad))
    ticks = sorted({0.0, round(xmax / 4), round(xmax / 2), round(3 * xmax / 4), float(xmax)})
    c.axes([(t, format(t, ".0f")) for t in ticks])
    for i, (sid, pts) in enumerate(sorted(by_search.items())):
        c.line(f"search {sid}", COLORS[i % len(COLORS)], sorted(pts), markers=len(pts) == 1)
    return c.document()


def render(data: Union[ExperimentTable, SearchOutcome, Sequence[Step]], spec: PlotSpec) -> str:
    """Render one figure to an SVG document string (also written to ``spec.output`` if set)."""
    kind = PlotKind(spec.kind)
    if kind is PlotKind.SEARCH_TRAJECTORY:
        steps = data.trajectory if isinstance(data, SearchOutcome) else list(data)
        if not steps:
            raise ValueError("cannot plot an empty trajectory")
        svg = _render_trajectory(steps, spec)
    else:
        if not isinstance(data, ExperimentTable) or not data.rows:
            raise ValueError(f"{kind.value} plot needs a non-empty experiment table")
        if kind is PlotKind.PER_YEAR_LINES:
            years = sorted({r.year for r in data.rows if r.metric == "persisted"})
            svg = _render_lines(data, spec, tuple(f"persisted:{y}" for y in years))
        elif kind is PlotKind.GRADUATED_DEPARTED_LINES:
            svg = _render_lines(data, spec, ("graduates", "quitters"))
        else:
            svg = _render_boxplot(data, spec)
    if spec.output is not None:
        Path(spec.output).write_bytes(svg.encode("utf-8"))
    return svg
