"""Dyadic Gaussian multiscale noise.

For a depth-``n`` system every non-leaf node ``S`` (scales ``0..n-1``) draws
``b_S = sigma_S * Z_S`` with ``Z_S`` standard normal. The noise function is
constant on the ``2**n`` leaf cells::

    N(y) = exp( sum over ancestors S of y of  b_S * h_S(y) - sigma_S**2 / 2 )

and ``E = integral of N dy`` is the mean of ``N`` over the cells. Since
``E[exp(b h - sigma**2/2)] = 1`` for every node, ``E`` has expectation 1.

Random numbers
--------------
``Z_S`` is the standard normal quantile of a uniform derived by hashing
``(seed, scale, index)`` with SplitMix64, so every node's draw is reproducible
and independent of traversal order. Monte Carlo sample ``k`` uses the seed
``sample_seed(seed, k)``.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
from scipy.special import ndtri

from .core import (
    MAX_DENSE_DEPTH,
    CoefficientTree,
    LeafMeasure,
    NodeId,
    coefficients_from_leaves,
    iter_dense_nodes,
    level_coefficients,
    reconstruct_leaves,
)
from .errors import ConfigError, DomainError, ShapeError

KAHANE_BOUND = 2.0 * math.log(2.0)

_MASK64 = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _splitmix(z: np.ndarray) -> np.ndarray:
    z = z + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _u64(values: Any) -> np.ndarray:
    if isinstance(values, (int, np.integer)):
        return np.array([int(values) & _MASK64], dtype=np.uint64)
    return np.asarray(values).astype(np.uint64)


def _derive(keys: np.ndarray, word: Any) -> np.ndarray:
    return _splitmix(keys ^ _splitmix(_u64(word)))


def sample_seed(seed: int, sample: int | np.ndarray) -> np.ndarray:
    """Seed of Monte Carlo sample(s) ``sample`` under master ``seed``."""
    return _derive(_splitmix(_u64(seed)), sample)


def node_normals(seeds: np.ndarray, scale: int) -> np.ndarray:
    """Standard normals for all nodes at ``scale``; shape ``(len(seeds), 2**scale)``."""
    keys = _derive(_splitmix(_u64(seeds))[:, None], scale)
    keys = _derive(keys, np.arange(1 << scale, dtype=np.uint64)[None, :])
    u = ((keys >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    return ndtri(u)


@dataclass(frozen=True)
class NoiseParams:
    """Noise standard deviations, either one per scale or one per node.

    ``sigmas`` maps scale -> sigma in ``"per-scale"`` mode and NodeId -> sigma in
    ``"per-node"`` mode, where nodes that are not listed get sigma 0.
    """

    mode: str
    depth: int
    sigmas: Mapping[Any, float]

    def __post_init__(self) -> None:
        if self.mode not in ("per-scale", "per-node"):
            raise ConfigError(f"unknown noise mode {self.mode!r}")
        if not 0 <= self.depth <= MAX_DENSE_DEPTH:
            raise ConfigError(f"noise depth must lie in [0, {MAX_DENSE_DEPTH}], got {self.depth}")
        clean: dict[Any, float] = {}
        for key, sigma in self.sigmas.items():
            sigma = float(sigma)
            if not (math.isfinite(sigma) and sigma >= 0):
                raise ConfigError(f"sigma for {key} must be a non-negative number, got {sigma!r}")
            if self.mode == "per-scale":
                key = int(key)
                if not 0 <= key < self.depth:
                    raise ConfigError(f"scale {key} outside [0, {self.depth})")
            else:
                key = NodeId.checked(*key)
                if key.scale >= self.depth:
                    raise ConfigError(f"node {key} outside a depth-{self.depth} system")
            clean[key] = sigma
        if self.mode == "per-scale" and len(clean) != self.depth:
            missing = sorted(set(range(self.depth)) - set(clean))
            raise ConfigError(f"per-scale noise needs a sigma for every scale; missing {missing}")
        object.__setattr__(self, "sigmas", dict(sorted(clean.items())))

    @classmethod
    def uniform(cls, sigma: float, depth: int) -> "NoiseParams":
        return cls("per-scale", depth, {s: sigma for s in range(depth)})

    def scale_sigmas(self, scale: int) -> np.ndarray:
        if self.mode == "per-scale":
            return np.full(1 << scale, self.sigmas[scale])
        row = np.zeros(1 << scale)
        for node, sigma in self.sigmas.items():
            if node.scale == scale:
                row[node.index] = sigma
        return row

    def sup_variance(self) -> float:
        return max((s * s for s in self.sigmas.values()), default=0.0)

    def to_obj(self) -> dict:
        if self.mode == "per-scale":
            sig = {str(s): v for s, v in self.sigmas.items()}
        else:
            sig = {f"{n.scale},{n.index}": v for n, v in self.sigmas.items()}
        return {"mode": self.mode, "depth": self.depth, "sigmas": sig}

    @classmethod
    def from_obj(cls, obj: Mapping[str, Any]) -> "NoiseParams":
        try:
            mode = obj["mode"]
            depth = int(obj["depth"])
            raw = obj["sigmas"]
            if mode == "per-scale" and isinstance(raw, list):
                sig = dict(enumerate(raw))
            elif mode == "per-scale":
                sig = {int(k): v for k, v in raw.items()}
            else:
                sig = {tuple(int(p) for p in k.split(",")): v for k, v in raw.items()}
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            raise ConfigError(f"malformed noise parameters: {exc!r}") from exc
        return cls(mode, depth, sig)

    @classmethod
    def load(cls, path: str | Path) -> "NoiseParams":
        try:
            return cls.from_obj(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from exc


@dataclass(frozen=True, eq=False)
class NoiseField:
    """One realisation of the noise function on the ``2**depth`` leaf cells."""

    depth: int
    log_multipliers: np.ndarray
    normalization: float

    @property
    def multipliers(self) -> np.ndarray:
        return np.exp(self.log_multipliers)

    @property
    def density(self) -> np.ndarray:
        """Normalised noise density; integrates to 1 against ``dy``."""
        return self.multipliers / self.normalization

    def measure(self) -> LeafMeasure:
        """The probability measure ``N dy / E`` on the leaf cells."""
        return LeafMeasure(self.depth, self.density * 2.0**-self.depth)


@dataclass(frozen=True)
class KahaneCheck:
    ok: bool
    margin: float

    def __bool__(self) -> bool:
        return self.ok


def check_kahane(params: NoiseParams) -> KahaneCheck:
    """``sup sigma**2 < 2 log 2``; the margin is ``2 log 2 - sup sigma**2``."""
    margin = KAHANE_BOUND - params.sup_variance()
    return KahaneCheck(margin > 0, margin)


def check_perturbation(tree: CoefficientTree, params: NoiseParams, epsilon: float) -> bool:
    """All ``|a_S| <= 1 - epsilon`` and all ``sigma_S**2 < epsilon / 2``."""
    if not 0 < epsilon <= 1:
        raise DomainError(f"epsilon must lie in (0, 1], got {epsilon!r}")
    if any(abs(a) > 1 - epsilon for a in tree.coeffs.values()):
        return False
    return params.sup_variance() < epsilon / 2


def _log_multipliers(params: NoiseParams, z_levels: Sequence[np.ndarray]) -> np.ndarray:
    """Sum of ``b_S h_S - sigma_S**2/2`` down each path; batch axis first."""
    depth = params.depth
    batch = z_levels[0].shape[0] if depth else 1
    total = np.zeros((batch, 1 << depth))
    for s in range(depth):
        sigma = params.scale_sigmas(s)
        b = sigma * z_levels[s]
        half = np.stack([b, -b], axis=-1).reshape(batch, 1 << (s + 1))
        total += np.repeat(half, 1 << (depth - s - 1), axis=-1)
        total -= np.repeat(sigma * sigma / 2.0, 1 << (depth - s), axis=-1)
    return total


def _normals(params: NoiseParams, seeds: np.ndarray) -> list[np.ndarray]:
    return [node_normals(seeds, s) for s in range(params.depth)]


def _fields(params: NoiseParams, seeds: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    logm = _log_multipliers(params, _normals(params, seeds))
    norm = np.exp(logm).sum(axis=-1) * 2.0**-params.depth
    return logm, norm


def sample_noise_field(params: NoiseParams, seed: int, z: Sequence[Sequence[float]] | None = None) -> NoiseField:
    """Draw one noise field.

    ``z`` overrides the Gaussian draws (one array of ``2**s`` values per scale);
    it exists for testing.
    """
    if z is None:
        levels = _normals(params, _u64(seed))
    else:
        levels = []
        for s in range(params.depth):
            row = np.asarray(z[s], dtype=np.float64)
            if row.shape != (1 << s,):
                raise ShapeError(f"z for scale {s} needs {1 << s} values")
            levels.append(row[None, :])
    logm = _log_multipliers(params, levels)[0]
    norm = math.fsum(np.exp(logm)) * 2.0**-params.depth
    logm.setflags(write=False)
    return NoiseField(params.depth, logm, norm)


def _check_shapes(tree: CoefficientTree, params: NoiseParams) -> None:
    if tree.depth != params.depth:
        raise ShapeError(f"tree depth {tree.depth} does not match noise depth {params.depth}")


def apply_noise(tree: CoefficientTree, params: NoiseParams, seed: int, normalize: str = "mass",
                field: NoiseField | None = None) -> CoefficientTree:
    """Multiply the leaf measure of ``tree`` by a noise realisation and re-derive coefficients.

    ``normalize="mass"`` rescales the noisy measure to the original total mass
    exactly. ``normalize="dy"`` divides by ``E = integral of N dy`` only, so the
    total mass is correct in expectation but varies between realisations.
    Coefficients do not depend on this choice. Cells of mass 0 stay at 0.
    """
    _check_shapes(tree, params)
    if normalize not in ("mass", "dy"):
        raise ConfigError(f"unknown normalisation {normalize!r}")
    if not check_perturbation(tree, params, _largest_epsilon(tree)):
        warnings.warn("noise parameters or coefficients fall outside the perturbation bounds", stacklevel=2)
    if field is None:
        field = sample_noise_field(params, seed)
    if not np.any(field.log_multipliers):
        return tree
    base = reconstruct_leaves(tree, tree.depth).masses
    # coefficients are scale invariant, so derive them before normalising
    noisy = coefficients_from_leaves(LeafMeasure(tree.depth, base * field.multipliers))
    if normalize == "mass":
        return noisy.with_total_mass(tree.total_mass)
    return noisy.with_total_mass(noisy.total_mass / field.normalization)


def _largest_epsilon(tree: CoefficientTree) -> float:
    biggest = max((abs(a) for a in tree.coeffs.values()), default=0.0)
    return min(1.0, max(1.0 - biggest, 1e-300))


@dataclass(frozen=True, eq=False)
class CoefficientStats:
    """Monte Carlo mean, variance and standard error of every noisy coefficient."""

    nodes: tuple[NodeId, ...]
    original: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    stderr: np.ndarray
    n_samples: int

    def rows(self):
        for k, node in enumerate(self.nodes):
            yield node, float(self.original[k]), float(self.mean[k]), float(self.variance[k]), float(self.stderr[k])

    def to_csv(self, comment: str | None = None) -> str:
        lines = [f"# {comment}"] if comment else []
        lines.append("node,scale,index,original,mean,variance,stderr")
        for node, orig, mean, var, se in self.rows():
            lines.append(f"{node.scale}:{node.index},{node.scale},{node.index},{orig!r},{mean!r},{var!r},{se!r}")
        return "\n".join(lines) + "\n"


def noisy_coefficient_stats(tree: CoefficientTree, params: NoiseParams, n_samples: int, seed: int,
                            batch_size: int = 2048) -> CoefficientStats:
    """Sample mean and variance of each coefficient over ``n_samples`` noisy realisations.

    Sample ``k`` is exactly ``apply_noise(tree, params, sample_seed(seed, k))``.
    Samples are processed in vectorised batches; sums are accumulated per batch
    so the result does not depend on how samples are batched beyond rounding.
    """
    _check_shapes(tree, params)
    if n_samples < 2:
        raise DomainError("need at least two samples")
    depth = tree.depth
    nodes = tuple(iter_dense_nodes(depth))
    original = np.concatenate([tree.level(s) for s in range(depth)]) if depth else np.zeros(0)
    if params.sup_variance() == 0:
        # every realisation is the input tree itself (see apply_noise)
        zeros = np.zeros(len(nodes))
        return CoefficientStats(nodes, original, original.copy(), zeros, zeros.copy(), n_samples)
    base = reconstruct_leaves(tree, depth).masses
    total = np.zeros(len(nodes))
    total_sq = np.zeros(len(nodes))
    shift = original  # centring on the original values keeps the variance sum well conditioned
    for start in range(0, n_samples, batch_size):
        ks = np.arange(start, min(start + batch_size, n_samples), dtype=np.uint64)
        logm, _ = _fields(params, sample_seed(seed, ks))
        noisy = base[None, :] * np.exp(logm)
        coeffs, _ = level_coefficients(noisy)
        flat = np.concatenate(coeffs, axis=-1) - shift if depth else np.zeros((ks.size, 0))
        total += flat.sum(axis=0)
        total_sq += (flat * flat).sum(axis=0)
    mean_dev = total / n_samples
    variance = np.maximum(total_sq - n_samples * mean_dev**2, 0.0) / (n_samples - 1)
    return CoefficientStats(nodes, original, original + mean_dev, variance, np.sqrt(variance / n_samples), n_samples)


def total_mass_samples(params: NoiseParams, n_samples: int, seed: int, batch_size: int = 4096) -> np.ndarray:
    """Un-normalised total mass ``E = integral of N dy`` for each Monte Carlo sample."""
    out = []
    for start in range(0, n_samples, batch_size):
        ks = np.arange(start, min(start + batch_size, n_samples), dtype=np.uint64)
        _, norm = _fields(params, sample_seed(seed, ks))
        out.append(norm)
    return np.concatenate(out) if out else np.zeros(0)
