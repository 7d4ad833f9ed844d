"""Turn raw data into leaf measures: time series, point clouds and feature systems.

Point clouds live in a box that is mapped affinely onto the unit cube, which is
then halved one dimension at a time following ``dim_order``. Cells are half-open
``[lo, hi)`` except that the last cell along each dimension is closed, so every
point of the closed cube lands in exactly one cell.
"""

from __future__ import annotations

import json
import math
import operator
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Hashable, Mapping, Sequence

import numpy as np

from .core import (
    CoefficientTree,
    LeafMeasure,
    NodeId,
    SparseLeafMeasure,
    coefficients_from_leaves,
)
from .errors import ConfigError, DomainError, IngestError, InvalidMeasureError, ShapeError
from .serialize import parse_float, read_numeric_rows

# Leaf indices are held in int64.
MAX_HALVINGS = 62


def series_to_measure(values: Sequence[float], depth: int) -> LeafMeasure:
    """Place a non-negative series on the ``2**depth`` cells of [0, 1).

    The series is read as a step function with equal-width steps. Longer series are
    summed within cells and shorter ones are spread evenly over the cells they
    cover; either way each cell receives exactly the mass overlapping it, so the
    total is unchanged.
    """
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    if depth < 0:
        raise ShapeError(f"depth must be non-negative, got {depth}")
    if v.size == 0:
        raise InvalidMeasureError("empty series")
    if not np.all(np.isfinite(v)):
        raise DomainError("series contains non-finite values")
    if np.any(v < 0):
        i = int(np.flatnonzero(v < 0)[0])
        raise DomainError(f"negative value {v[i]!r} at position {i}")
    if not np.any(v > 0):
        raise InvalidMeasureError("series has zero total mass")
    n_cells = 1 << depth
    n = v.size
    if n == n_cells:
        return LeafMeasure(depth, v)
    if n % n_cells == 0:
        return LeafMeasure(depth, v.reshape(n_cells, -1).sum(axis=1))
    if n_cells % n == 0:
        return LeafMeasure(depth, np.repeat(v / (n_cells // n), n_cells // n))
    # general case: exact overlaps via the cumulative mass at each cell edge
    cum = np.concatenate([[0.0], np.cumsum(v)])
    edges = np.arange(n_cells + 1) * n / n_cells
    k = np.minimum(np.floor(edges).astype(np.int64), n - 1)
    at_edges = cum[k] + (edges - k) * v[k]
    at_edges[-1] = cum[-1]
    return LeafMeasure(depth, np.maximum(np.diff(at_edges), 0.0))


@dataclass(frozen=True)
class Cell:
    """Axis-aligned cell in unit-cube coordinates; ``closed[d]`` marks a closed upper face."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]
    closed: tuple[bool, ...]


def boundary_assignment(point: Sequence[float], cell: Cell) -> bool:
    """Whether ``point`` belongs to ``cell`` under the half-open / closed-last convention."""
    for x, lo, hi, closed in zip(point, cell.lo, cell.hi, cell.closed):
        if not (lo <= x < hi or (closed and x == hi)):
            return False
    return True


@dataclass(frozen=True)
class HypercubeSystem:
    """Binary set system on a box, halved along ``dim_order`` (1-based, cycled) ``depth`` times."""

    dim: int
    bounds: tuple[tuple[float, float], ...]
    depth: int
    dim_order: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ConfigError(f"dimension must be positive, got {self.dim}")
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        if len(bounds) != self.dim:
            raise ConfigError(f"need {self.dim} (min, max) pairs, got {len(bounds)}")
        for d, (lo, hi) in enumerate(bounds, start=1):
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ConfigError(f"dimension {d}: bounds ({lo}, {hi}) need min < max")
        order = tuple(int(d) for d in self.dim_order) or tuple(range(1, self.dim + 1))
        if any(not 1 <= d <= self.dim for d in order):
            raise ConfigError(f"dim_order entries must lie in [1, {self.dim}], got {order}")
        if not 0 <= self.depth <= MAX_HALVINGS:
            raise ConfigError(f"depth must lie in [0, {MAX_HALVINGS}], got {self.depth}")
        object.__setattr__(self, "bounds", bounds)
        object.__setattr__(self, "dim_order", order)

    def halving_dims(self) -> list[int]:
        """0-based dimension split at each of the ``depth`` halvings."""
        return [self.dim_order[k % len(self.dim_order)] - 1 for k in range(self.depth)]

    def halvings_per_dim(self) -> list[int]:
        counts = [0] * self.dim
        for d in self.halving_dims():
            counts[d] += 1
        return counts

    def normalize(self, points: Any) -> np.ndarray:
        """Map points into the unit cube; raises for any point outside the bounds."""
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim == 1 and self.dim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[1] != self.dim:
            raise ShapeError(f"expected points of shape (n, {self.dim}), got {pts.shape}")
        lo = np.array([b[0] for b in self.bounds])
        hi = np.array([b[1] for b in self.bounds])
        bad = ~np.all((pts >= lo) & (pts <= hi), axis=1)
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            raise DomainError(f"point {i} {pts[i].tolist()} lies outside the bounds {list(self.bounds)}")
        return np.clip((pts - lo) / (hi - lo), 0.0, 1.0)

    def leaf_indices(self, unit_points: np.ndarray) -> np.ndarray:
        """Scale-``depth`` cell index of each unit-cube point."""
        u = np.asarray(unit_points, dtype=np.float64)
        counts = self.halvings_per_dim()
        coords = []
        for d, h in enumerate(counts):
            c = np.floor(np.ldexp(u[:, d], h)).astype(np.int64)
            coords.append(np.minimum(c, (1 << h) - 1))
        index = np.zeros(u.shape[0], dtype=np.int64)
        seen = [0] * self.dim
        for d in self.halving_dims():
            bit = (coords[d] >> (counts[d] - 1 - seen[d])) & 1
            index = (index << 1) | bit
            seen[d] += 1
        return index

    def cell_bounds(self, node: tuple[int, int]) -> Cell:
        node = NodeId.checked(*node)
        if node.scale > self.depth:
            raise DomainError(f"node {node} is deeper than the system depth {self.depth}")
        lo = [0.0] * self.dim
        hi = [1.0] * self.dim
        for k, d in enumerate(self.halving_dims()[: node.scale]):
            mid = (lo[d] + hi[d]) / 2
            if (node.index >> (node.scale - 1 - k)) & 1:
                lo[d] = mid
            else:
                hi[d] = mid
        return Cell(tuple(lo), tuple(hi), tuple(h == 1.0 for h in hi))


def _default_order(dim: int, order: Sequence[int] | str | None) -> tuple[int, ...]:
    if order is None or order == "forward":
        return tuple(range(1, dim + 1))
    if order == "reverse":
        return tuple(range(dim, 0, -1))
    if isinstance(order, str):
        raise ConfigError(f"unknown dimension order {order!r}")
    return tuple(order)


def _as_points(points: Any) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise ShapeError("expected a non-empty (n, d) array of points")
    if not np.all(np.isfinite(pts)):
        raise DomainError("points contain non-finite coordinates")
    return pts


def fit_system(points: Any, depth: int, dim_order: Sequence[int] | str | None = None) -> HypercubeSystem:
    """Per-dataset min/max box. Degenerate extents are widened to length 1."""
    pts = _as_points(points)
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    hi = np.where(hi > lo, hi, lo + 1.0)
    dim = pts.shape[1]
    return HypercubeSystem(dim, tuple(zip(lo.tolist(), hi.tolist())), depth, _default_order(dim, dim_order))


def fit_common_systems(datasets: Sequence[Any], depth: int, dim_order: Sequence[int] | str | None = None,
                       median_align: bool = False) -> list[HypercubeSystem]:
    """Boxes for several datasets: one translation each, one shared set of extents.

    With ``median_align`` each dataset's coordinate-wise median lands on the same
    point of the unit cube; otherwise each dataset's minimum corner goes to the origin.
    """
    arrays = [_as_points(p) for p in datasets]
    if not arrays:
        raise ShapeError("no datasets given")
    dim = arrays[0].shape[1]
    if any(a.shape[1] != dim for a in arrays):
        raise ShapeError("datasets have different dimensions")
    if median_align:
        anchors = [np.median(a, axis=0) for a in arrays]
        below = np.max([m - a.min(axis=0) for m, a in zip(anchors, arrays)], axis=0)
        above = np.max([a.max(axis=0) - m for m, a in zip(anchors, arrays)], axis=0)
        offsets = [m - below for m in anchors]
        extent = below + above
    else:
        offsets = [a.min(axis=0) for a in arrays]
        extent = np.max([a.max(axis=0) - a.min(axis=0) for a in arrays], axis=0)
    extent = np.where(extent > 0, extent, 1.0)
    order = _default_order(dim, dim_order)
    systems = []
    for off in offsets:
        # nudge the upper bound so rounding in off + extent never excludes the extreme point
        hi = np.nextafter(off + extent, np.inf)
        systems.append(HypercubeSystem(dim, tuple(zip(off.tolist(), hi.tolist())), depth, order))
    return systems


def point_cells(points: Any, system: HypercubeSystem) -> np.ndarray:
    """Leaf cell index of every point (in input order)."""
    return system.leaf_indices(system.normalize(_as_points(points)))


def points_to_measure(points: Any, system: HypercubeSystem) -> SparseLeafMeasure:
    """Counting measure: each point adds mass 1 to its leaf cell; only occupied cells are stored."""
    idx, counts = np.unique(point_cells(points, system), return_counts=True)
    return SparseLeafMeasure(system.depth, dict(zip(idx.tolist(), counts.astype(float).tolist())))


def labeled_cells(points: Any, labels: Sequence[Hashable], system: HypercubeSystem) -> dict[int, frozenset]:
    """Set of point labels present in each occupied leaf cell."""
    cells = point_cells(points, system)
    if len(labels) != cells.size:
        raise ShapeError(f"{len(labels)} labels for {cells.size} points")
    found: dict[int, set] = {}
    for c, lab in zip(cells.tolist(), labels):
        found.setdefault(c, set()).add(lab)
    return {c: frozenset(s) for c, s in sorted(found.items())}


_OPS: dict[str, Callable[[Any, Any], bool]] = {
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
    "==": operator.eq,
    "!=": operator.ne,
}
_COMPLEMENT = {"<": ">=", ">=": "<", ">": "<=", "<=": ">", "==": "!=", "!=": "=="}


@dataclass(frozen=True)
class Predicate:
    name: str
    fn: Callable[[Any], bool]

    def __call__(self, point: Any) -> bool:
        return bool(self.fn(point))


@dataclass(frozen=True)
class ThresholdPredicate:
    """``point[column] <op> value``."""

    name: str
    column: Any
    op: str = ">"
    value: float = 0.0

    def __post_init__(self) -> None:
        if self.op not in _OPS:
            raise ConfigError(f"predicate {self.name!r}: unknown comparator {self.op!r}")

    def __call__(self, point: Any) -> bool:
        return bool(_OPS[self.op](point[self.column], self.value))

    def complement_of(self, other: "ThresholdPredicate") -> bool:
        return self.column == other.column and self.value == other.value and _COMPLEMENT[self.op] == other.op


@dataclass(frozen=True)
class FeatureSystem:
    """Ordered features; level ``i`` splits each set into ``F_{i+1}`` (left) and its complement."""

    predicates: tuple[Predicate | ThresholdPredicate, ...]

    def __post_init__(self) -> None:
        preds = tuple(self.predicates)
        if not preds:
            raise ConfigError("a feature system needs at least one predicate")
        if len(preds) > MAX_HALVINGS:
            raise ConfigError(f"at most {MAX_HALVINGS} predicates are supported")
        thresholds = [p for p in preds if isinstance(p, ThresholdPredicate)]
        for i, p in enumerate(thresholds):
            for q in thresholds[i + 1:]:
                if p.complement_of(q):
                    raise ConfigError(f"predicates {p.name!r} and {q.name!r} are complements of each other")
        object.__setattr__(self, "predicates", preds)

    @property
    def depth(self) -> int:
        return len(self.predicates)

    @classmethod
    def from_config(cls, config: Any) -> "FeatureSystem":
        specs = config.get("features") if isinstance(config, Mapping) else config
        if not isinstance(specs, list):
            raise ConfigError("feature config must be a list or an object with a 'features' list")
        preds = []
        for k, spec in enumerate(specs):
            try:
                preds.append(ThresholdPredicate(
                    name=str(spec.get("name", f"F{k + 1}")),
                    column=spec["column"],
                    op=spec.get("op", ">"),
                    value=float(spec["value"]),
                ))
            except (KeyError, TypeError, ValueError, AttributeError) as exc:
                raise ConfigError(f"feature {k}: {exc!r}") from exc
        return cls(tuple(preds))

    @classmethod
    def load(cls, path: str | Path) -> "FeatureSystem":
        try:
            return cls.from_config(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from exc


def feature_cells(points: Sequence[Any], system: FeatureSystem) -> list[int]:
    out = []
    for k, p in enumerate(points):
        index = 0
        for pred in system.predicates:
            try:
                inside = pred(p)
            except Exception as exc:
                raise IngestError(f"predicate {pred.name!r} failed on point {k}: {exc}") from exc
            index = (index << 1) | (0 if inside else 1)
        out.append(index)
    return out


def feature_system_leaves(points: Sequence[Any], system: FeatureSystem) -> SparseLeafMeasure:
    points = list(points)
    if not points:
        raise InvalidMeasureError("no data points")
    counts: dict[int, float] = {}
    for c in feature_cells(points, system):
        counts[c] = counts.get(c, 0.0) + 1.0
    return SparseLeafMeasure(system.depth, counts)


def feature_system_measure(points: Sequence[Any], system: FeatureSystem) -> CoefficientTree:
    """Coefficients of the counting measure on the binary system cut out by the features."""
    return coefficients_from_leaves(feature_system_leaves(points, system))


def read_points(path: str | Path, label_column: int | None = None) -> tuple[np.ndarray, list[str] | None]:
    """CSV point cloud: numeric columns, plus an optional label column (negative indices allowed)."""
    path = Path(path)
    rows = read_numeric_rows(path.read_text().splitlines(), str(path))
    if not rows:
        raise IngestError(f"{path}: no data rows")
    width = len(rows[0][1])
    if label_column is not None:
        label_column = label_column % width
    coords, labels = [], []
    for lineno, fields in rows:
        values = []
        for j, f in enumerate(fields):
            if j == label_column:
                labels.append(f)
            else:
                values.append(parse_float(f, str(path), lineno))
        coords.append(values)
    if not coords[0]:
        raise IngestError(f"{path}: no coordinate columns")
    return np.array(coords, dtype=np.float64), (labels if label_column is not None else None)
