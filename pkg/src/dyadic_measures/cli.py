"""``dyadic`` command line tool.

Every command is a pure function of its arguments (plus ``--seed`` where noise
is involved). Outputs carry a provenance stamp naming the tool version and a
hash of the run configuration. Errors go to stderr as
``dyadic: error[<kind>]: <message>`` with a non-zero exit status.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from pathlib import Path
from typing import Any, Sequence

from . import core, ingest, noise, serialize, stats, viz
from .errors import ConfigError, DyadicError, IngestError

LARGE_LEAF_WARNING = 10**7


def _run_config(args: argparse.Namespace) -> dict[str, Any]:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "config")}


def _emit(text: str, output: str | None) -> None:
    if output in (None, "-"):
        sys.stdout.write(text)
    else:
        try:
            Path(output).write_text(text)
        except OSError as exc:
            raise DyadicError(f"cannot write {output}: {exc.strerror or exc}") from exc


def _parse_order(text: str | None) -> Any:
    if text in (None, "", "forward", "reverse"):
        return text or None
    try:
        return [int(t) for t in str(text).split(",")]
    except ValueError:
        raise ConfigError(f"--dim-order must be 'forward', 'reverse' or a comma list like 1,2,3; got {text!r}") from None


def _parse_bounds(text: str | None) -> list[tuple[float, float]] | None:
    if not text:
        return None
    try:
        return [tuple(float(v) for v in part.split(",")) for part in text.split(";")]  # type: ignore[misc]
    except ValueError:
        raise ConfigError(f"--bounds must look like 'lo,hi;lo,hi'; got {text!r}") from None


def _point_system(points, args) -> ingest.HypercubeSystem:
    if args.depth is None:
        raise ConfigError("--depth is required for point clouds")
    bounds = _parse_bounds(args.bounds)
    order = _parse_order(args.dim_order)
    if bounds is None:
        return ingest.fit_system(points, args.depth, order)
    dim = points.shape[1]
    if order in (None, "forward", "reverse"):
        order = ingest._default_order(dim, order)
    return ingest.HypercubeSystem(dim, tuple(bounds), args.depth, tuple(order))


def _tree_from_input(args) -> core.CoefficientTree:
    if args.features:
        system = ingest.FeatureSystem.load(args.features)
        points, _ = ingest.read_points(args.input)
        return ingest.feature_system_measure(points.tolist(), system)
    if args.points:
        points, _ = ingest.read_points(args.input, args.label_column)
        return core.coefficients_from_leaves(ingest.points_to_measure(points, _point_system(points, args)))
    values = serialize.read_series(args.input)
    depth = args.depth
    if depth is None:
        depth = max(0, math.ceil(math.log2(len(values)))) if values else 0
    if (1 << depth) > LARGE_LEAF_WARNING:
        print(f"dyadic: warning: depth {depth} gives {1 << depth} leaves", file=sys.stderr)
    try:
        leaves = ingest.series_to_measure(values, depth)
    except DyadicError as exc:
        raise type(exc)(f"{args.input}: {exc}") from exc
    return core.coefficients_from_leaves(leaves)


def cmd_coeffs(args) -> None:
    tree = _tree_from_input(args)
    _emit(serialize.tree_to_json(tree, serialize.provenance(_run_config(args))), args.output)


def cmd_reconstruct(args) -> None:
    tree = serialize.load_tree(args.input)
    leaves = core.reconstruct_leaves(tree, tree.depth if args.depth is None else args.depth)
    if args.format == "json":
        text = serialize.leaves_to_json(leaves)
    else:
        text = serialize.leaves_to_csv(leaves, serialize.provenance_comment(_run_config(args)))
    _emit(text, args.output)


def cmd_distance(args) -> None:
    a = serialize.load_tree(args.first)
    b = serialize.load_tree(args.second)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        d = stats.norm_distance(a, b)
    for w in caught:
        print(f"dyadic: warning: {w.message}", file=sys.stderr)
    _emit(f"{d!r}\n", args.output)


def cmd_infer(args) -> None:
    if not args.inputs:
        raise ConfigError("infer needs at least one coefficient file")
    tree = stats.average_coefficients([serialize.load_tree(p) for p in args.inputs])
    for v in core.validate(tree):
        print(f"dyadic: warning: {v.message}", file=sys.stderr)
    _emit(serialize.tree_to_json(tree, serialize.provenance(_run_config(args))), args.output)


def cmd_noise(args) -> None:
    tree = serialize.load_tree(args.input)
    params = noise.NoiseParams.load(args.params)
    check = noise.check_kahane(params)
    if not check.ok:
        print("dyadic: warning: " + "=" * 60, file=sys.stderr)
        print(f"dyadic: warning: sup sigma^2 = {params.sup_variance():.6g} is not below 2 log 2 = "
              f"{noise.KAHANE_BOUND:.6g}; the infinite-depth limit is not guaranteed", file=sys.stderr)
        print("dyadic: warning: " + "=" * 60, file=sys.stderr)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    config = _run_config(args)
    prov = serialize.provenance(config)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for k in range(args.realizations):
            seed_k = int(noise.sample_seed(args.seed, k)[0])
            noisy = noise.apply_noise(tree, params, seed_k)
            serialize.save_tree(noisy, out_dir / f"noisy_{k:03d}.json", prov)
    result = noise.noisy_coefficient_stats(tree, params, args.samples, args.seed)
    (out_dir / "stats.csv").write_text(result.to_csv(serialize.provenance_comment(config)))
    (out_dir / "run.json").write_text(json.dumps({"config": config, "provenance": prov}, sort_keys=True, indent=2) + "\n")


def cmd_weld(args) -> None:
    tree = serialize.load_tree(args.input)
    max_scale = tree.depth - 1 if args.max_scale is None else args.max_scale
    labels = None
    if args.points:
        points, point_labels = ingest.read_points(args.points, args.label_column)
        if point_labels is None:
            raise ConfigError("--points needs --label-column for knot colouring")
        args.depth = tree.depth
        system = _point_system(points, args)
        cells = ingest.labeled_cells(points, point_labels, system)
        labels = viz.knot_labels(cells, tree.depth)
    curve = viz.pseudo_welding_curve(tree, max_scale, labels)
    comment = serialize.provenance_comment(_run_config(args))
    viz.render_svg(curve, args.output, size=args.size, comment=comment)
    if args.knots_csv:
        _emit(viz.curve_to_csv(curve, comment), args.knots_csv)


def cmd_wheel(args) -> None:
    tree = serialize.load_tree(args.input)
    max_scale = min(tree.depth - 1, 5) if args.max_scale is None else args.max_scale
    wheel = viz.day_wheel(tree, max_scale, clockwise=not args.counterclockwise)
    viz.render_svg(wheel, args.output, cmap=args.colormap, size=args.size,
                   comment=serialize.provenance_comment(_run_config(args)))


def cmd_dirac(args) -> None:
    tree = core.dirac_coefficients(args.x, args.depth)
    _emit(serialize.tree_to_json(tree, serialize.provenance(_run_config(args))), args.output)


def cmd_features(args) -> None:
    trees = [serialize.load_tree(p) for p in args.inputs]
    if not trees:
        raise ConfigError("features needs at least one coefficient file")
    vectors = [stats.weighted_feature_vector(t, args.max_scale) for t in trees]
    text = serialize.feature_rows_to_csv(vectors, args.max_scale, [Path(p).name for p in args.inputs],
                                         serialize.provenance_comment(_run_config(args)))
    _emit(text, args.output)


def cmd_validate(args) -> None:
    tree = serialize.load_tree(args.input)
    found = core.validate(tree)
    for v in found:
        print(f"{v.kind}\t{'' if v.node is None else v.node}\t{v.message}")
    if found:
        raise DyadicError(f"{len(found)} violation(s)")


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(prog="dyadic", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON file of option defaults; explicit flags override it")
    sub = parser.add_subparsers(dest="command", required=True)
    subs: dict[str, argparse.ArgumentParser] = {}

    def add(name: str, func, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.set_defaults(func=func)
        subs[name] = p
        return p

    def output(p, required=False):
        p.add_argument("-o", "--output", required=required, help="output file (default: stdout)")

    def points_opts(p):
        p.add_argument("--label-column", type=int, default=None, help="column holding point labels")
        p.add_argument("--dim-order", default=None, help="'forward' (default), 'reverse' or e.g. 1,2,3")
        p.add_argument("--bounds", default=None, help="'lo,hi;lo,hi;...' (default: fit to the data)")

    p = add("coeffs", cmd_coeffs, "compute product coefficients of a series, point cloud or feature system")
    p.add_argument("input")
    p.add_argument("--depth", type=int, default=None, help="tree depth (series default: ceil(log2(length)))")
    p.add_argument("--points", action="store_true", help="input is a point cloud (one point per line)")
    p.add_argument("--features", default=None, help="JSON feature-system config; input is a data table")
    points_opts(p)
    output(p)

    p = add("reconstruct", cmd_reconstruct, "leaf masses of a coefficient tree")
    p.add_argument("input")
    p.add_argument("--depth", type=int, default=None)
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    output(p)

    p = add("distance", cmd_distance, "multi-scale variance distance between two trees")
    p.add_argument("first")
    p.add_argument("second")
    output(p)

    p = add("infer", cmd_infer, "average coefficient trees")
    p.add_argument("inputs", nargs="*")
    output(p)

    p = add("noise", cmd_noise, "noisy realisations and Monte Carlo coefficient statistics")
    p.add_argument("input")
    p.add_argument("--params", required=True, help="noise parameter JSON")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--realizations", type=int, default=1, help="noisy trees to write")
    p.add_argument("--out-dir", required=True)

    p = add("weld", cmd_weld, "pseudo-welding curve as SVG")
    p.add_argument("input")
    p.add_argument("--max-scale", type=int, default=None)
    p.add_argument("--points", default=None, help="labelled point CSV for knot colouring")
    points_opts(p)
    p.add_argument("--size", type=float, default=600.0)
    p.add_argument("--knots-csv", default=None, help="also write the knots as CSV")
    output(p, required=True)

    p = add("wheel", cmd_wheel, "day wheel of the coefficients as SVG")
    p.add_argument("input")
    p.add_argument("--max-scale", type=int, default=None, help="default: min(depth - 1, 5)")
    p.add_argument("--colormap", choices=sorted(viz.COLORMAPS), default="diverging")
    p.add_argument("--counterclockwise", action="store_true")
    p.add_argument("--size", type=float, default=400.0)
    output(p, required=True)

    p = add("dirac", cmd_dirac, "closed-form coefficients of a point mass on [0, 1)")
    p.add_argument("x", type=float)
    p.add_argument("--depth", type=int, required=True)
    output(p)

    p = add("features", cmd_features, "weighted feature vectors of coefficient trees as CSV")
    p.add_argument("inputs", nargs="*")
    p.add_argument("--max-scale", type=int, required=True)
    output(p)

    p = add("validate", cmd_validate, "check coefficient bounds and the zero-measure convention")
    p.add_argument("input")
    return parser, subs


def _load_config(argv: Sequence[str]) -> dict[str, Any]:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return {}
    try:
        data = json.loads(Path(known.config).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{known.config}:{exc.lineno}: invalid JSON: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{known.config}: expected a JSON object")
    return {k.replace("-", "_"): v for k, v in data.items()}


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        config = _load_config(argv)
        parser, subs = build_parser()
        if config:
            for p in subs.values():
                for action in p._actions:
                    # a required option supplied by the config file becomes optional
                    if action.dest in config and action.option_strings:
                        action.required = False
                known = {a.dest for a in p._actions}
                p.set_defaults(**{k: v for k, v in config.items() if k in known})
        args = parser.parse_args(argv)
        args.func(args)
    except DyadicError as exc:
        print(f"dyadic: error[{exc.kind}]: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        where = f"{exc.filename}: " if exc.filename else ""
        print(f"dyadic: error[io]: {where}{exc.strerror or exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
