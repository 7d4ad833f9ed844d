"""Multi-scale variance, the induced distance, and inference by coefficient averaging."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import CoefficientTree, NodeId
from .errors import DomainError, ShapeError


@dataclass(frozen=True)
class ScaleWeightedNorm:
    """Squared multi-scale variance norm with its per-scale terms ``2**-s * sum(a_S**2)``."""

    value: float
    per_scale_terms: tuple[float, ...]

    @property
    def norm(self) -> float:
        return math.sqrt(self.value)


def _per_scale_squares(tree: CoefficientTree) -> list[float]:
    sums = [[] for _ in range(tree.depth)]
    for node, a in tree.coeffs.items():
        sums[node.scale].append(a * a)
    return [math.ldexp(math.fsum(sq), -s) for s, sq in enumerate(sums)]


def variance_degree2(tree: CoefficientTree) -> ScaleWeightedNorm:
    """Lowest-order (quadratic) term of the variance of the partial product measure.

    This is also the squared multi-scale variance norm of the coefficient vector.
    """
    terms = _per_scale_squares(tree)
    return ScaleWeightedNorm(math.fsum(terms), tuple(terms))


def single_scale_variance(a: float, scale: int) -> float:
    """Variance of the density ``1 + a*h_S`` against ``dy`` for one node at ``scale``."""
    if not abs(a) <= 1:
        raise DomainError(f"coefficient {a!r} outside [-1, 1]")
    if scale < 0:
        raise DomainError(f"scale must be non-negative, got {scale}")
    return math.ldexp(a * a, -scale)


def norm_distance(tree_a: CoefficientTree, tree_b: CoefficientTree) -> float:
    """Multi-scale variance norm of the coefficient difference.

    Trees with different total masses are compared on coefficients only, with a
    warning, since the distance is meant for measures of equal mass.
    """
    if tree_a.depth != tree_b.depth:
        raise ShapeError(f"depth mismatch: {tree_a.depth} vs {tree_b.depth}")
    if tree_a.total_mass != tree_b.total_mass:
        warnings.warn(
            f"total masses differ ({tree_a.total_mass!r} vs {tree_b.total_mass!r}); comparing coefficients only",
            stacklevel=2,
        )
    sums: list[list[float]] = [[] for _ in range(tree_a.depth)]
    for node in set(tree_a.coeffs) | set(tree_b.coeffs):
        d = tree_a.coefficient(node) - tree_b.coefficient(node)
        sums[node.scale].append(d * d)
    return math.sqrt(math.fsum(math.ldexp(math.fsum(sq), -s) for s, sq in enumerate(sums)))


def average_coefficients(trees: Sequence[CoefficientTree]) -> CoefficientTree:
    """Coefficient-wise mean of sample trees; the total mass is the mean sample mass.

    Averaging keeps every coefficient in [-1, 1] but can break the zero-measure
    convention; run :func:`~dyadic_measures.core.validate` if that matters.
    """
    trees = list(trees)
    if not trees:
        raise DomainError("cannot average an empty list of trees")
    depth = trees[0].depth
    for k, t in enumerate(trees):
        if t.depth != depth:
            raise ShapeError(f"tree {k} has depth {t.depth}, expected {depth}")
    n = len(trees)
    nodes: set[NodeId] = set()
    for t in trees:
        nodes.update(t.coeffs)
    coeffs = {node: math.fsum(t.coefficient(node) for t in trees) / n for node in nodes}
    total = math.fsum(t.total_mass for t in trees) / n
    return CoefficientTree(depth, total, coeffs)


def scale_weight(scale: int) -> float:
    return 2.0 ** (-scale / 2)


def weighted_feature_vector(tree: CoefficientTree, max_scale: int) -> np.ndarray:
    """Coefficients of scales ``0..max_scale`` in lexicographic order, weighted by ``2**(-s/2)``.

    The Euclidean norm of the result is the multi-scale variance norm truncated at
    ``max_scale``.
    """
    if not 0 <= max_scale <= tree.depth - 1:
        raise ShapeError(f"max_scale {max_scale} outside [0, {tree.depth - 1}]")
    return np.concatenate([tree.level(s) * scale_weight(s) for s in range(max_scale + 1)])
