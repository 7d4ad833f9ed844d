"""JSON and CSV forms of trees, leaf measures and feature vectors.

Floats are written with ``repr`` (shortest decimal that round-trips), so a
write/read cycle reproduces every value bit for bit.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .core import CoefficientTree, LeafMeasure, NodeId
from .errors import IngestError

TOOL_NAME = "dyadic-measures"
TOOL_VERSION = "0.1.0"


def config_hash(config: Mapping[str, Any]) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def provenance(config: Mapping[str, Any] | None = None) -> dict[str, str]:
    return {"tool": TOOL_NAME, "version": TOOL_VERSION, "config": config_hash(config or {})}


def provenance_comment(config: Mapping[str, Any] | None = None) -> str:
    p = provenance(config)
    return f"{p['tool']} {p['version']} config={p['config']}"


def _num(x: float) -> str:
    if not math.isfinite(x):
        raise ValueError(f"cannot serialise non-finite value {x!r}")
    return repr(float(x))


def tree_to_json(tree: CoefficientTree, prov: Mapping[str, str] | None = None) -> str:
    rows = ",\n".join(f"    [{n.scale}, {n.index}, {_num(a)}]" for n, a in tree.coeffs.items())
    parts = [
        f'  "depth": {tree.depth}',
        f'  "totalMass": {_num(tree.total_mass)}',
        '  "coeffs": [\n' + rows + "\n  ]" if rows else '  "coeffs": []',
    ]
    if prov:
        parts.append(f'  "provenance": {json.dumps(dict(prov), sort_keys=True)}')
    return "{\n" + ",\n".join(parts) + "\n}\n"


def tree_from_obj(obj: Mapping[str, Any]) -> CoefficientTree:
    try:
        depth = int(obj["depth"])
        total = float(obj["totalMass"])
        coeffs = {}
        for row in obj["coeffs"]:
            s, i, a = row
            if int(s) != s or int(i) != i:
                raise ValueError(f"non-integer node address {row!r}")
            node = NodeId.checked(int(s), int(i))
            if node in coeffs:
                raise ValueError(f"duplicate coefficient for node {node}")
            coeffs[node] = float(a)
    except (KeyError, TypeError, ValueError) as exc:
        raise IngestError(f"malformed coefficient tree: {exc}") from exc
    return CoefficientTree(depth, total, coeffs)


def tree_from_json(text: str) -> CoefficientTree:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise IngestError(f"invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return tree_from_obj(obj)


def load_tree(path: str | Path) -> CoefficientTree:
    path = Path(path)
    try:
        return tree_from_json(path.read_text())
    except IngestError as exc:
        raise IngestError(f"{path}: {exc}") from exc


def save_tree(tree: CoefficientTree, path: str | Path, prov: Mapping[str, str] | None = None) -> None:
    Path(path).write_text(tree_to_json(tree, prov))


def read_numeric_rows(lines: Iterable[str], source: str = "<input>", columns: int | None = None) -> list[tuple[int, list[str]]]:
    """Split CSV lines into fields, skipping blanks and ``#`` comments.

    Returns raw string fields; numeric conversion is left to the caller so that
    label columns survive. Errors name the 1-based line number.
    """
    rows = []
    width = columns
    for lineno, line in enumerate(lines, start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        fields = [f.strip() for f in text.split(",")]
        if width is None:
            width = len(fields)
        elif len(fields) != width:
            raise IngestError(f"{source}:{lineno}: expected {width} fields, got {len(fields)}")
        rows.append((lineno, fields))
    return rows


def parse_float(text: str, source: str, lineno: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise IngestError(f"{source}:{lineno}: cannot parse {text!r} as a number") from None
    if not math.isfinite(value):
        raise IngestError(f"{source}:{lineno}: non-finite value {text!r}")
    return value


def read_series(path: str | Path) -> list[float]:
    """One value per line (CSV) or a JSON array, chosen by file suffix."""
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".json":
        try:
            values = json.loads(text)
        except json.JSONDecodeError as exc:
            raise IngestError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from exc
        if not isinstance(values, list):
            raise IngestError(f"{path}: expected a JSON array of numbers")
        out = []
        for k, v in enumerate(values):
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                raise IngestError(f"{path}: element {k} is not a finite number: {v!r}")
            out.append(float(v))
        return out
    return [parse_float(fields[0], str(path), lineno) for lineno, fields in read_numeric_rows(text.splitlines(), str(path), 1)]


def leaves_to_csv(leaves: LeafMeasure, comment: str | None = None) -> str:
    head = f"# {comment}\n" if comment else ""
    return head + "".join(_num(m) + "\n" for m in leaves.masses.tolist())


def leaves_to_json(leaves: LeafMeasure) -> str:
    return "[" + ", ".join(_num(m) for m in leaves.masses.tolist()) + "]\n"


def feature_rows_to_csv(vectors: Sequence[Sequence[float]], max_scale: int, names: Sequence[str] | None = None,
                        comment: str | None = None) -> str:
    """One weighted feature vector per row; column ``a_s_i`` is node ``(s, i)`` times ``2**(-s/2)``."""
    cols = [f"a_{s}_{i}" for s in range(max_scale + 1) for i in range(1 << s)]
    lines = []
    if comment:
        lines.append(f"# {comment}")
    lines.append("# columns: coefficients in (scale, index) lexicographic order, each weighted by 2**(-scale/2)")
    lines.append(",".join((["name"] if names is not None else []) + cols))
    for k, vec in enumerate(vectors):
        vec = np.asarray(vec, dtype=np.float64)
        if vec.size != len(cols):
            raise ValueError(f"row {k} has {vec.size} entries, expected {len(cols)}")
        cells = [_num(v) for v in vec.tolist()]
        if names is not None:
            cells.insert(0, names[k])
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"
