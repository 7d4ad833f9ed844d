"""Pseudo-welding curves and day wheels, with deterministic SVG/CSV output.

Pseudo-welding curve: start from the segment (0, 0) -> (1, 0). At stage ``s``
every segment, matched in order with node ``(s, i)``, is split at its midpoint,
and the midpoint is pushed along the segment's left normal by
``a_(s,i) * 2**-s * |segment| / 2``.

Day wheel: the root coefficient fills a centre disk and scale ``s`` fills a ring
of ``2**s`` equal sectors, sector 0 starting at 12 o'clock and running clockwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Hashable, Iterable, Mapping, Sequence

import numpy as np

from .core import CoefficientTree, NodeId
from .errors import ConfigError, DyadicError, ShapeError

ONLY_A = "onlyA"
ONLY_B = "onlyB"
MIXED = "mixed"
EMPTY = "empty"
ENDPOINT = "endpoint"
UNLABELED = "unlabeled"

KNOT_COLORS = {
    ONLY_A: "#d62728",
    ONLY_B: "#2ca02c",
    MIXED: "#1f77b4",
    EMPTY: "#000000",
    ENDPOINT: "#7f7f7f",
    UNLABELED: "#555555",
}


@dataclass(frozen=True)
class Knot:
    node: NodeId | None
    category: str


@dataclass(frozen=True, eq=False)
class WeldCurve:
    knots: np.ndarray  # (K, 2)
    meta: tuple[Knot, ...]
    stages: tuple[np.ndarray, ...]  # knots after each stage, stage 0 first

    @property
    def max_scale(self) -> int:
        return len(self.stages) - 1


def knot_labels(cell_labels: Mapping[int, Iterable[Hashable]], depth: int,
                classes: Sequence[Hashable] | None = None) -> dict[NodeId, str]:
    """Category of every non-empty node at scales ``0..depth``.

    ``cell_labels`` maps scale-``depth`` cell index to the labels of the points
    inside it. Nodes missing from the result contain no points (category "empty").
    """
    present: set = set()
    leaves: dict[int, frozenset] = {}
    for cell, labs in cell_labels.items():
        labs = frozenset(labs)
        if labs:
            leaves[int(cell)] = labs
            present |= labs
    if classes is None:
        classes = sorted(present, key=str)
        if len(classes) > 2:
            raise ConfigError(f"knot colouring needs at most two classes, found {len(classes)}: {classes}")
    else:
        classes = list(classes)
        if len(classes) != 2:
            raise ConfigError("exactly two classes must be named")
        unknown = present - set(classes)
        if unknown:
            raise ConfigError(f"labels {sorted(unknown, key=str)} are not among the classes {classes}")
    class_a = classes[0] if classes else None

    def category(labs: frozenset) -> str:
        if len(labs) > 1:
            return MIXED
        return ONLY_A if next(iter(labs)) == class_a else ONLY_B

    out: dict[NodeId, str] = {}
    current = leaves
    for s in range(depth, -1, -1):
        for i, labs in current.items():
            out[NodeId(s, i)] = category(labs)
        if s == 0:
            break
        parents: dict[int, frozenset] = {}
        for i, labs in current.items():
            parents[i >> 1] = parents.get(i >> 1, frozenset()) | labs
        current = parents
    return dict(sorted(out.items()))


def pseudo_welding_curve(tree: CoefficientTree, max_scale: int,
                         labels: Mapping[NodeId, str] | None = None) -> WeldCurve:
    if not 0 <= max_scale <= tree.depth - 1:
        raise ShapeError(f"max_scale {max_scale} outside [0, {tree.depth - 1}]")
    points = np.array([[0.0, 0.0], [1.0, 0.0]])
    meta: list[Knot] = [Knot(None, ENDPOINT), Knot(None, ENDPOINT)]
    stages = []
    for s in range(max_scale + 1):
        p, q = points[:-1], points[1:]
        d = q - p
        a = tree.level(s)[:, None] * 2.0**-s * 0.5
        # (-dy, dx) is the left normal scaled by the segment length
        new = (p + q) * 0.5 + a * np.column_stack([-d[:, 1], d[:, 0]])
        merged = np.empty((2 * len(points) - 1, 2))
        merged[0::2] = points
        merged[1::2] = new
        new_meta = []
        for i in range(len(points) - 1):
            node = NodeId(s, i)
            cat = UNLABELED if labels is None else labels.get(node, EMPTY)
            new_meta.append(meta[i])
            new_meta.append(Knot(node, cat))
        new_meta.append(meta[-1])
        points, meta = merged, new_meta
        points.setflags(write=False)
        stages.append(points)
    return WeldCurve(points, tuple(meta), tuple(stages))


def segment_lengths(points: np.ndarray) -> np.ndarray:
    return np.hypot(*np.diff(points, axis=0).T)


@dataclass(frozen=True)
class Sector:
    scale: int
    index: int
    value: float
    r_inner: float
    r_outer: float
    start: float  # radians, measured in the wheel's direction from its start angle
    end: float


@dataclass(frozen=True)
class DayWheel:
    max_scale: int
    sectors: tuple[Sector, ...]
    clockwise: bool = True
    start_angle: float = 0.0  # radians from 12 o'clock


def day_wheel(tree: CoefficientTree, max_scale: int, clockwise: bool = True, start_angle: float = 0.0) -> DayWheel:
    if not 0 <= max_scale <= tree.depth - 1:
        raise ShapeError(f"max_scale {max_scale} outside [0, {tree.depth - 1}]")
    width = 1.0 / (max_scale + 1)
    sectors = []
    for s in range(max_scale + 1):
        step = 2 * math.pi / (1 << s)
        for i, a in enumerate(tree.level(s).tolist()):
            sectors.append(Sector(s, i, min(1.0, max(-1.0, a)), s * width, (s + 1) * width, i * step, (i + 1) * step))
    return DayWheel(max_scale, tuple(sectors), clockwise, start_angle)


# colour maps over [-1, 1]

def _lerp(stops: Sequence[tuple[float, tuple[float, float, float]]], t: float) -> tuple[int, int, int]:
    t = min(1.0, max(0.0, t))
    for (t0, c0), (t1, c1) in zip(stops, stops[1:]):
        if t <= t1:
            f = 0.0 if t1 == t0 else (t - t0) / (t1 - t0)
            return tuple(int(round(255 * (x0 + f * (x1 - x0)))) for x0, x1 in zip(c0, c1))  # type: ignore[return-value]
    return tuple(int(round(255 * x)) for x in stops[-1][1])  # type: ignore[return-value]


_DIVERGING = [(0.0, (0.02, 0.19, 0.38)), (0.25, (0.26, 0.58, 0.76)), (0.5, (1.0, 1.0, 1.0)),
              (0.75, (0.84, 0.38, 0.30)), (1.0, (0.40, 0.0, 0.12))]
_JET = [(0.0, (0.0, 0.0, 0.5)), (0.11, (0.0, 0.0, 1.0)), (0.125, (0.0, 0.0, 1.0)), (0.34, (0.0, 0.86, 1.0)),
        (0.35, (0.0, 0.9, 0.97)), (0.64, (1.0, 1.0, 0.0)), (0.66, (1.0, 0.86, 0.0)), (0.89, (1.0, 0.0, 0.0)),
        (1.0, (0.5, 0.0, 0.0))]
COLORMAPS: dict[str, list] = {"diverging": _DIVERGING, "jet": _JET}


def colormap(name: str) -> Callable[[float], str]:
    try:
        stops = COLORMAPS[name]
    except KeyError:
        raise ConfigError(f"unknown colormap {name!r}; choose from {sorted(COLORMAPS)}") from None

    def color(value: float) -> str:
        r, g, b = _lerp(stops, (value + 1.0) / 2.0)
        return f"#{r:02x}{g:02x}{b:02x}"

    return color


def _f(x: float) -> str:
    text = f"{x:.6f}"
    return "0.000000" if text == "-0.000000" else text


def _svg_open(width: float, height: float) -> list[str]:
    return [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_f(width)}" height="{_f(height)}" '
        f'viewBox="0 0 {_f(width)} {_f(height)}">',
        '<rect x="0" y="0" width="100%" height="100%" fill="#ffffff"/>',
    ]


def curve_svg(curve: WeldCurve, size: float = 600.0, title: str | None = None, comment: str | None = None) -> str:
    pts = curve.knots
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    span = max(float(np.max(hi - lo)), 1e-12)
    margin = 40.0
    scale = (size - 2 * margin) / span
    height = max(float(hi[1] - lo[1]) * scale + 2 * margin, 2 * margin) + 30.0

    def xy(p) -> tuple[str, str]:
        return _f(margin + (p[0] - lo[0]) * scale), _f(margin + (hi[1] - p[1]) * scale)

    out = _svg_open(size, height)
    if comment:
        out.insert(1, f"<!-- {comment} -->")
    if title:
        out.append(f'<text x="{_f(margin)}" y="20" font-family="sans-serif" font-size="14">{title}</text>')
    coords = " ".join(",".join(xy(p)) for p in pts)
    out.append(f'<polyline class="curve" fill="none" stroke="#333333" stroke-width="1" points="{coords}"/>')
    r = max(1.0, min(4.0, 200.0 / len(pts)))
    for p, k in zip(pts, curve.meta):
        x, y = xy(p)
        tag = "" if k.node is None else f' data-node="{k.node.scale},{k.node.index}"'
        out.append(f'<circle class="knot {k.category}" cx="{x}" cy="{y}" r="{_f(r)}" '
                   f'fill="{KNOT_COLORS[k.category]}"{tag}/>')
    used = [c for c in KNOT_COLORS if any(k.category == c for k in curve.meta)]
    for j, cat in enumerate(used):
        x = margin + j * 100.0
        y = height - 12.0
        out.append(f'<circle class="legend" cx="{_f(x)}" cy="{_f(y - 4)}" r="4" fill="{KNOT_COLORS[cat]}"/>')
        out.append(f'<text x="{_f(x + 8)}" y="{_f(y)}" font-family="sans-serif" font-size="11">{cat}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _polar(cx: float, cy: float, r: float, theta: float, wheel: DayWheel) -> tuple[str, str]:
    t = wheel.start_angle + (theta if wheel.clockwise else -theta)
    return _f(cx + r * math.sin(t)), _f(cy - r * math.cos(t))


def wheel_svg(wheel: DayWheel, cmap: str = "diverging", size: float = 400.0, title: str | None = None,
              comment: str | None = None) -> str:
    color = colormap(cmap)
    radius = size / 2 - 20.0
    cx = cy = size / 2
    out = _svg_open(size, size + 50.0)
    if comment:
        out.insert(1, f"<!-- {comment} -->")
    sweep = 1 if wheel.clockwise else 0
    for sec in wheel.sectors:
        ro, ri = sec.r_outer * radius, sec.r_inner * radius
        fill = color(sec.value)
        attrs = f'class="sector" data-node="{sec.scale},{sec.index}" fill="{fill}" stroke="#808080" stroke-width="0.5"'
        if sec.scale == 0:
            d = (f"M {_f(cx)} {_f(cy - ro)} A {_f(ro)} {_f(ro)} 0 1 1 {_f(cx)} {_f(cy + ro)} "
                 f"A {_f(ro)} {_f(ro)} 0 1 1 {_f(cx)} {_f(cy - ro)} Z")
        else:
            large = 1 if sec.end - sec.start > math.pi else 0
            x0, y0 = _polar(cx, cy, ro, sec.start, wheel)
            x1, y1 = _polar(cx, cy, ro, sec.end, wheel)
            x2, y2 = _polar(cx, cy, ri, sec.end, wheel)
            x3, y3 = _polar(cx, cy, ri, sec.start, wheel)
            d = (f"M {x0} {y0} A {_f(ro)} {_f(ro)} 0 {large} {sweep} {x1} {y1} L {x2} {y2} "
                 f"A {_f(ri)} {_f(ri)} 0 {large} {1 - sweep} {x3} {y3} Z")
        out.append(f'<path {attrs} d="{d}"/>')
    # colour bar
    n = 11
    bar_w = (size - 40.0) / n
    for k in range(n):
        v = -1.0 + 2.0 * k / (n - 1)
        out.append(f'<rect class="legend-swatch" x="{_f(20 + k * bar_w)}" y="{_f(size + 5)}" '
                   f'width="{_f(bar_w)}" height="14" fill="{color(v)}"/>')
    for v, anchor, x in ((-1, "start", 20.0), (0, "middle", size / 2), (1, "end", size - 20.0)):
        out.append(f'<text x="{_f(x)}" y="{_f(size + 34)}" text-anchor="{anchor}" '
                   f'font-family="sans-serif" font-size="11">{v:+d}</text>')
    if title:
        out.append(f'<text x="{_f(cx)}" y="{_f(size + 48)}" text-anchor="middle" '
                   f'font-family="sans-serif" font-size="12">{title}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_svg(item: WeldCurve | DayWheel, path: str | Path, **options) -> str:
    """Write ``item`` as SVG to ``path`` and return the text. Identical input gives identical bytes."""
    if isinstance(item, WeldCurve):
        text = curve_svg(item, **options)
    elif isinstance(item, DayWheel):
        text = wheel_svg(item, **options)
    else:
        raise TypeError(f"cannot render {type(item).__name__}")
    path = Path(path)
    try:
        path.write_text(text)
    except OSError as exc:
        raise DyadicError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return text


def curve_to_csv(curve: WeldCurve, comment: str | None = None) -> str:
    lines = [f"# {comment}"] if comment else []
    lines.append("x,y,scale,index,category")
    for p, k in zip(curve.knots.tolist(), curve.meta):
        s, i = ("", "") if k.node is None else (str(k.node.scale), str(k.node.index))
        lines.append(f"{p[0]!r},{p[1]!r},{s},{i},{k.category}")
    return "\n".join(lines) + "\n"
