"""Binary set systems, product coefficients and the finite-scale product formula.

A measure on a dyadic set is parameterised by its total mass and one product
coefficient ``a_S`` per non-leaf node ``S``::

    mass(L(S)) = (1 + a_S) / 2 * mass(S)
    mass(R(S)) = (1 - a_S) / 2 * mass(S)

Nodes are addressed by ``NodeId(scale, index)``; the root is ``(0, 0)`` and the
children of ``(s, i)`` are ``(s + 1, 2i)`` and ``(s + 1, 2i + 1)``. A tree of
depth ``n`` stores coefficients for scales ``0 .. n-1`` and describes the masses
of the ``2**n`` cells at scale ``n``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Iterator, Mapping, NamedTuple, Sequence

import numpy as np

from .errors import (
    DepthError,
    DomainError,
    InvalidCoefficientError,
    InvalidMeasureError,
    ShapeError,
)

__all__ = [
    "NodeId",
    "LeafMeasure",
    "SparseLeafMeasure",
    "CoefficientTree",
    "NaryCoefficients",
    "Violation",
    "coefficient_from_masses",
    "coefficients_from_leaves",
    "reconstruct_leaves",
    "reconstruct_sparse",
    "node_mass",
    "dirac_coefficients",
    "nary_coefficients",
    "validate",
    "level_coefficients",
    "iter_dense_nodes",
]

# Dense arrays above this depth are refused; sparse paths have no limit.
MAX_DENSE_DEPTH = 26


class NodeId(NamedTuple):
    scale: int
    index: int

    @classmethod
    def checked(cls, scale: int, index: int) -> "NodeId":
        scale, index = int(scale), int(index)
        if scale < 0 or not 0 <= index < (1 << scale):
            raise DomainError(f"invalid node ({scale}, {index}): index must lie in [0, 2**scale)")
        return cls(scale, index)

    @property
    def left(self) -> "NodeId":
        return NodeId(self.scale + 1, 2 * self.index)

    @property
    def right(self) -> "NodeId":
        return NodeId(self.scale + 1, 2 * self.index + 1)

    def children(self) -> tuple["NodeId", "NodeId"]:
        return self.left, self.right

    def parent(self) -> "NodeId":
        if self.scale == 0:
            raise DomainError("the root has no parent")
        return NodeId(self.scale - 1, self.index >> 1)

    def is_left(self) -> bool:
        return self.index % 2 == 0

    def ancestor(self, scale: int) -> "NodeId":
        return NodeId(scale, self.index >> (self.scale - scale))

    def __str__(self) -> str:
        return f"({self.scale},{self.index})"


def _check_depth(depth: int) -> int:
    depth = int(depth)
    if depth < 0:
        raise DepthError(f"depth must be non-negative, got {depth}")
    return depth


@dataclass(frozen=True, eq=False)
class LeafMeasure:
    """Masses of the ``2**depth`` cells at scale ``depth``, left to right."""

    depth: int
    masses: np.ndarray

    def __post_init__(self) -> None:
        depth = _check_depth(self.depth)
        masses = np.array(self.masses, dtype=np.float64).reshape(-1)
        if masses.size != 1 << depth:
            raise ShapeError(f"depth {depth} needs {1 << depth} masses, got {masses.size}")
        if not np.all(np.isfinite(masses)):
            raise DomainError("masses must be finite")
        if np.any(masses < 0):
            i = int(np.flatnonzero(masses < 0)[0])
            raise DomainError(f"negative mass {masses[i]!r} at cell {i}")
        masses.setflags(write=False)
        object.__setattr__(self, "depth", depth)
        object.__setattr__(self, "masses", masses)

    @property
    def total(self) -> float:
        return math.fsum(self.masses)

    def to_sparse(self) -> "SparseLeafMeasure":
        nz = np.flatnonzero(self.masses)
        return SparseLeafMeasure(self.depth, {int(i): float(self.masses[i]) for i in nz})

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LeafMeasure):
            return NotImplemented
        return self.depth == other.depth and np.array_equal(self.masses, other.masses)

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True, eq=False)
class SparseLeafMeasure:
    """Scale-``depth`` cell masses keyed by cell index; absent cells have mass 0."""

    depth: int
    cells: Mapping[int, float]

    def __post_init__(self) -> None:
        depth = _check_depth(self.depth)
        n = 1 << depth
        cells: dict[int, float] = {}
        for i, m in sorted(self.cells.items()):
            i, m = int(i), float(m)
            if not 0 <= i < n:
                raise ShapeError(f"cell index {i} outside [0, {n}) at depth {depth}")
            if not math.isfinite(m) or m < 0:
                raise DomainError(f"invalid mass {m!r} at cell {i}")
            if m > 0:
                cells[i] = m
        object.__setattr__(self, "depth", depth)
        object.__setattr__(self, "cells", MappingProxyType(cells))

    @property
    def total(self) -> float:
        return math.fsum(self.cells.values())

    def to_dense(self) -> LeafMeasure:
        if self.depth > MAX_DENSE_DEPTH:
            raise ShapeError(f"depth {self.depth} is too deep for a dense leaf vector")
        masses = np.zeros(1 << self.depth)
        for i, m in self.cells.items():
            masses[i] = m
        return LeafMeasure(self.depth, masses)

    def __len__(self) -> int:
        return len(self.cells)


@dataclass(frozen=True, eq=False)
class CoefficientTree:
    """Total mass plus product coefficients for the non-leaf nodes of a depth-``n`` tree.

    ``coeffs`` is sparse: a node that is absent has coefficient 0. Values are not
    range-checked here so that :func:`validate` can report bad input; use it before
    trusting externally supplied trees.
    """

    depth: int
    total_mass: float
    coeffs: Mapping[NodeId, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        depth = _check_depth(self.depth)
        total = float(self.total_mass)
        if not math.isfinite(total):
            raise InvalidMeasureError(f"total mass must be finite, got {total!r}")
        items = []
        for key, value in self.coeffs.items():
            node = NodeId.checked(*key)
            if node.scale >= depth:
                raise ShapeError(f"node {node} is not a non-leaf node of a depth-{depth} tree")
            value = float(value)
            if not math.isfinite(value):
                raise InvalidCoefficientError(f"non-finite coefficient at {node}")
            items.append((node, value))
        items.sort()
        object.__setattr__(self, "depth", depth)
        object.__setattr__(self, "total_mass", total)
        object.__setattr__(self, "coeffs", MappingProxyType(dict(items)))
        object.__setattr__(self, "_levels", {})

    @classmethod
    def from_levels(cls, total_mass: float, levels: Sequence[Sequence[float]]) -> "CoefficientTree":
        """Build a tree from dense per-scale coefficient arrays (scale ``s`` has ``2**s`` entries)."""
        coeffs = {}
        for s, row in enumerate(levels):
            row = np.asarray(row, dtype=np.float64)
            if row.shape != (1 << s,):
                raise ShapeError(f"scale {s} needs {1 << s} coefficients, got shape {row.shape}")
            for i, a in enumerate(row.tolist()):
                coeffs[NodeId(s, i)] = a
        return cls(len(levels), total_mass, coeffs)

    def coefficient(self, node: tuple[int, int]) -> float:
        return self.coeffs.get(node, 0.0)  # type: ignore[call-overload]

    def level(self, scale: int) -> np.ndarray:
        """Dense read-only coefficient array for one scale."""
        if not 0 <= scale < self.depth:
            raise ShapeError(f"scale {scale} outside [0, {self.depth})")
        cache = self._levels  # type: ignore[attr-defined]
        if scale not in cache:
            if scale > MAX_DENSE_DEPTH:
                raise ShapeError(f"scale {scale} is too deep for a dense array")
            row = np.zeros(1 << scale)
            for node, a in self.coeffs.items():
                if node.scale == scale:
                    row[node.index] = a
            row.setflags(write=False)
            cache[scale] = row
        return cache[scale]

    def levels(self, max_scale: int | None = None) -> list[np.ndarray]:
        top = self.depth - 1 if max_scale is None else max_scale
        return [self.level(s) for s in range(top + 1)]

    def nodes(self) -> Iterator[NodeId]:
        return iter(self.coeffs)

    def with_total_mass(self, total_mass: float) -> "CoefficientTree":
        return CoefficientTree(self.depth, total_mass, self.coeffs)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CoefficientTree):
            return NotImplemented
        if self.depth != other.depth or self.total_mass != other.total_mass:
            return False
        keys = set(self.coeffs) | set(other.coeffs)
        return all(self.coefficient(k) == other.coefficient(k) for k in keys)

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f"CoefficientTree(depth={self.depth}, total_mass={self.total_mass!r}, stored={len(self.coeffs)})"


@dataclass(frozen=True)
class NaryCoefficients:
    values: tuple[float, ...]


@dataclass(frozen=True)
class Violation:
    kind: str  # "bound", "convention" or "total-mass"
    node: NodeId | None
    message: str


def coefficient_from_masses(mass_left: float, mass_right: float) -> float:
    """Solve ``mass_left = (1 + a)/2 * (mass_left + mass_right)`` for ``a``.

    Returns 0 when both masses are 0 (the zero-measure convention).
    """
    for name, m in (("left", mass_left), ("right", mass_right)):
        if not math.isfinite(m) or m < 0:
            raise DomainError(f"{name} mass must be a non-negative finite number, got {m!r}")
    total = mass_left + mass_right
    if total == 0:
        return 0.0
    return (mass_left - mass_right) / total


def level_coefficients(masses: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Bottom-up pass over dense leaf masses.

    Works along the last axis, so a batch of leaf vectors with shape ``(..., 2**n)``
    is accepted. Returns ``(coefficients, node_masses)``, each a list indexed by
    scale; ``node_masses`` has ``n + 1`` entries, the last being the leaves.
    """
    masses = np.asarray(masses, dtype=np.float64)
    n = int(masses.shape[-1]).bit_length() - 1
    if masses.shape[-1] != 1 << n:
        raise ShapeError(f"leaf count {masses.shape[-1]} is not a power of two")
    node_masses = [masses]
    coeffs: list[np.ndarray] = []
    current = masses
    for _ in range(n):
        left = current[..., 0::2]
        right = current[..., 1::2]
        parent = left + right
        with np.errstate(invalid="ignore", divide="ignore"):
            a = np.where(parent > 0, (left - right) / parent, 0.0)
        coeffs.append(a)
        node_masses.append(parent)
        current = parent
    coeffs.reverse()
    node_masses.reverse()
    return coeffs, node_masses


def coefficients_from_leaves(leaves: LeafMeasure | SparseLeafMeasure) -> CoefficientTree:
    """Product coefficients of a finite-scale measure via the bottom-up pass.

    Only nodes of positive mass are stored; every other coefficient is 0 by the
    zero-measure convention, so sparse input yields sparse output.
    """
    total = leaves.total
    if not total > 0:
        raise InvalidMeasureError("the measure has zero total mass")
    if isinstance(leaves, SparseLeafMeasure):
        return _coefficients_sparse(leaves, total)
    coeffs_by_scale, masses_by_scale = level_coefficients(leaves.masses)
    coeffs: dict[NodeId, float] = {}
    for s, (a, m) in enumerate(zip(coeffs_by_scale, masses_by_scale)):
        for i in np.flatnonzero(m).tolist():
            coeffs[NodeId(s, i)] = float(a[i])
    return CoefficientTree(leaves.depth, total, coeffs)


def _coefficients_sparse(leaves: SparseLeafMeasure, total: float) -> CoefficientTree:
    coeffs: dict[NodeId, float] = {}
    current = dict(leaves.cells)
    for s in range(leaves.depth - 1, -1, -1):
        parents: dict[int, list[float]] = {}
        for i, m in current.items():
            pair = parents.setdefault(i >> 1, [0.0, 0.0])
            pair[i & 1] = m
        current = {}
        for p, (left, right) in parents.items():
            mass = left + right
            coeffs[NodeId(s, p)] = (left - right) / mass
            current[p] = mass
    return CoefficientTree(leaves.depth, total, coeffs)


def _check_bounds(tree: CoefficientTree) -> None:
    for node, a in tree.coeffs.items():
        if abs(a) > 1:
            raise InvalidCoefficientError(f"coefficient {a!r} at {node} lies outside [-1, 1]")


def _split(mass, a):
    return mass * (1.0 + a) * 0.5, mass * (1.0 - a) * 0.5


def reconstruct_leaves(tree: CoefficientTree, target_depth: int | None = None) -> LeafMeasure:
    """Top-down evaluation of the partial product measure at ``target_depth``."""
    target = tree.depth if target_depth is None else _check_depth(target_depth)
    if target > tree.depth:
        raise DepthError(f"target depth {target} exceeds tree depth {tree.depth}")
    if target > MAX_DENSE_DEPTH:
        raise ShapeError(f"depth {target} is too deep for a dense leaf vector; use reconstruct_sparse")
    _check_bounds(tree)
    masses = np.array([tree.total_mass])
    for s in range(target):
        left, right = _split(masses, tree.level(s))
        masses = np.empty(2 * masses.size)
        masses[0::2] = left
        masses[1::2] = right
    return LeafMeasure(target, masses)


def reconstruct_sparse(tree: CoefficientTree, target_depth: int | None = None) -> SparseLeafMeasure:
    """Like :func:`reconstruct_leaves` but only visits cells of positive mass."""
    target = tree.depth if target_depth is None else _check_depth(target_depth)
    if target > tree.depth:
        raise DepthError(f"target depth {target} exceeds tree depth {tree.depth}")
    _check_bounds(tree)
    current = {0: tree.total_mass} if tree.total_mass > 0 else {}
    for s in range(target):
        nxt: dict[int, float] = {}
        for i, m in current.items():
            left, right = _split(m, tree.coefficient((s, i)))
            if left > 0:
                nxt[2 * i] = left
            if right > 0:
                nxt[2 * i + 1] = right
        current = nxt
    return SparseLeafMeasure(target, current)


def node_mass(tree: CoefficientTree, node: tuple[int, int]) -> float:
    """Mass of one node: the product formula evaluated along its root path."""
    node = NodeId.checked(*node)
    if node.scale > tree.depth:
        raise DomainError(f"node {node} is below the leaves of a depth-{tree.depth} tree")
    mass = tree.total_mass
    for k in range(node.scale):
        a = tree.coefficient(node.ancestor(k))
        left, right = _split(mass, a)
        mass = right if (node.index >> (node.scale - k - 1)) & 1 else left
    return mass


def dirac_coefficients(x: float, depth: int) -> CoefficientTree:
    """Closed-form coefficients of the unit point mass at ``x`` in [0, 1).

    Along the dyadic path containing ``x`` the coefficient at scale ``n`` is
    ``(-1) ** floor(2**(n+1) * x)``; every other coefficient is 0.
    """
    depth = _check_depth(depth)
    x = float(x)
    if not (math.isfinite(x) and 0 <= x < 1):
        raise DomainError(f"point {x!r} is outside [0, 1)")
    coeffs = {}
    for n in range(depth):
        index = math.floor(math.ldexp(x, n))
        half = math.floor(math.ldexp(x, n + 1))
        coeffs[NodeId(n, index)] = -1.0 if half % 2 else 1.0
    return CoefficientTree(depth, 1.0, coeffs)


def nary_coefficients(child_masses: Sequence[float]) -> NaryCoefficients:
    """Coefficients ``x_i`` with ``mass(C_i) = (1 + x_i)/n * mass(S)`` and ``sum(x_i) = 0``."""
    masses = [float(m) for m in child_masses]
    n = len(masses)
    if n < 2:
        raise DomainError("a parent needs at least two children")
    for i, m in enumerate(masses):
        if not math.isfinite(m) or m < 0:
            raise DomainError(f"child {i} has invalid mass {m!r}")
    if n == 2:
        a = coefficient_from_masses(*masses)
        return NaryCoefficients((a, -a))
    total = math.fsum(masses)
    if total == 0:
        return NaryCoefficients((0.0,) * n)
    return NaryCoefficients(tuple(n * m / total - 1.0 for m in masses))


def validate(tree: CoefficientTree) -> list[Violation]:
    """Report bound, zero-measure-convention and total-mass problems; empty means valid."""
    found: list[Violation] = []
    if not tree.total_mass > 0:
        found.append(Violation("total-mass", None, f"total mass {tree.total_mass!r} is not positive"))
    for node, a in tree.coeffs.items():
        if not -1.0 <= a <= 1.0:
            found.append(Violation("bound", node, f"coefficient {a!r} at {node} outside [-1, 1]"))
    masses: dict[NodeId, float] = {NodeId(0, 0): tree.total_mass}

    def mass_of(node: NodeId) -> float:
        # iterative to stay clear of the recursion limit on deep sparse trees
        path = []
        while node not in masses:
            path.append(node)
            node = node.parent()
        m = masses[node]
        for child in reversed(path):
            left, right = _split(m, tree.coefficient(child.parent()))
            m = left if child.is_left() else right
            masses[child] = m
        return m

    for node, a in tree.coeffs.items():
        if a != 0 and mass_of(node) == 0:
            found.append(Violation("convention", node, f"nonzero coefficient {a!r} below a zero-mass node {node}"))
    return found


def iter_dense_nodes(depth: int) -> Iterable[NodeId]:
    """All non-leaf nodes of a depth-``depth`` tree in lexicographic order."""
    for s in range(depth):
        for i in range(1 << s):
            yield NodeId(s, i)
