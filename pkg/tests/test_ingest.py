import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dyadic_measures import (
    ConfigError,
    DomainError,
    FeatureSystem,
    HypercubeSystem,
    IngestError,
    InvalidMeasureError,
    ThresholdPredicate,
    boundary_assignment,
    coefficients_from_leaves,
    feature_system_measure,
    points_to_measure,
    series_to_measure,
)
from dyadic_measures.ingest import (
    Predicate,
    fit_common_systems,
    fit_system,
    labeled_cells,
    point_cells,
    read_points,
)


def overlap_resample(values, n_cells):
    """Oracle: exact mass of the step function over each of n_cells equal cells."""
    n = len(values)
    out = []
    for j in range(n_cells):
        lo, hi = Fraction(j * n, n_cells), Fraction((j + 1) * n, n_cells)
        mass = Fraction(0)
        for k, v in enumerate(values):
            width = min(hi, k + 1) - max(lo, k)
            if width > 0:
                mass += Fraction(v) * width
        out.append(mass)
    return out


class TestSeries:
    def test_examples(self):
        m = series_to_measure([1, 1, 1, 1], 2)
        assert m.masses.tolist() == [1, 1, 1, 1] and m.total == 4
        assert series_to_measure([3, 1, 2, 2], 2).masses.tolist() == [3, 1, 2, 2]

    def test_hourly_day_on_32_cells(self, rng):
        hours = rng.uniform(0, 20, 24)
        m = series_to_measure(hours, 5)
        assert m.masses.size == 32
        assert m.total == pytest.approx(hours.sum(), rel=1e-12)
        np.testing.assert_allclose(m.masses, [float(x) for x in overlap_resample(hours.tolist(), 32)],
                                   rtol=1e-12, atol=1e-12)

    @given(st.lists(st.floats(0, 100), min_size=1, max_size=40), st.integers(0, 6))
    @settings(max_examples=150)
    def test_matches_overlap_oracle(self, values, depth):
        if sum(values) == 0:
            values[0] = 1.0
        m = series_to_measure(values, depth)
        expected = [float(x) for x in overlap_resample(values, 1 << depth)]
        np.testing.assert_allclose(m.masses, expected, rtol=1e-9, atol=1e-9)
        assert m.total == pytest.approx(sum(values), rel=1e-12)

    def test_errors(self):
        with pytest.raises(DomainError):
            series_to_measure([1, -1], 1)
        with pytest.raises(InvalidMeasureError):
            series_to_measure([0, 0, 0, 0], 2)


class TestBoundary:
    def test_examples(self):
        system = HypercubeSystem(1, ((0.0, 1.0),), 1)
        left, right = system.cell_bounds((1, 0)), system.cell_bounds((1, 1))
        assert not boundary_assignment([0.5], left) and boundary_assignment([0.5], right)
        assert boundary_assignment([1.0], right) and not boundary_assignment([1.0], left)
        assert boundary_assignment([0.0], left)
        assert point_cells([[0.5], [1.0], [0.0]], system).tolist() == [1, 1, 0]

    @pytest.mark.parametrize("dim,depth", [(1, 9), (2, 8), (3, 9), (2, 5)])
    def test_partition_brute_force(self, rng, dim, depth):
        system = HypercubeSystem(dim, ((0.0, 1.0),) * dim, depth)
        grid = np.arange(0, 9) / 8  # hits many cell faces, including the closed upper one
        pts = np.concatenate([rng.random((300, dim)),
                              np.array(list(itertools.product(grid, repeat=dim)))])
        cells = [system.cell_bounds((depth, i)) for i in range(1 << depth)]
        idx = point_cells(pts, system)
        for p, k in zip(pts, idx.tolist()):
            hits = [i for i, c in enumerate(cells) if boundary_assignment(p, c)]
            assert hits == [k]

    def test_cells_nest(self):
        system = HypercubeSystem(2, ((0.0, 1.0), (0.0, 1.0)), 4, (2, 1))
        parent = system.cell_bounds((1, 1))
        assert parent.lo == (0.0, 0.5) and parent.hi == (1.0, 1.0)
        child = system.cell_bounds((2, 2))
        assert child.lo == (0.0, 0.5) and child.hi == (0.5, 1.0)


class TestPoints:
    def test_center_point(self):
        for depth in range(0, 7):
            system = HypercubeSystem(2, ((0.0, 1.0), (0.0, 1.0)), depth)
            leaves = points_to_measure([[0.5, 0.5]], system)
            assert len(leaves) == 1 and leaves.total == 1
            tree = coefficients_from_leaves(leaves)
            assert set(tree.coeffs.values()) <= {-1.0, 0.0, 1.0}

    def test_two_points(self):
        system = HypercubeSystem(1, ((0.0, 1.0),), 1)
        leaves = points_to_measure([0.1, 0.9], system)
        assert leaves.to_dense().masses.tolist() == [1, 1]
        assert coefficients_from_leaves(leaves).coefficient((0, 0)) == 0

    def test_grid_in_three_dimensions(self):
        pts = [list(p) for p in itertools.product([0.25, 0.75], repeat=3)]
        system = HypercubeSystem(3, ((0.0, 1.0),) * 3, 3)
        leaves = points_to_measure(pts, system)
        assert leaves.to_dense().masses.tolist() == [1.0] * 8
        assert all(a == 0 for a in coefficients_from_leaves(leaves).coeffs.values())

    def test_outside_point_is_named(self):
        system = HypercubeSystem(1, ((0.0, 1.0),), 2)
        with pytest.raises(DomainError, match="point 2"):
            points_to_measure([0.1, 0.2, 1.5], system)

    def test_mass_and_permutation(self, rng):
        pts = rng.normal(size=(500, 3))
        system = fit_system(pts, 12)
        a = points_to_measure(pts, system)
        b = points_to_measure(pts[rng.permutation(500)], system)
        assert a.cells == b.cells and a.total == 500
        tree = coefficients_from_leaves(a)
        assert len(tree.coeffs) <= 12 * 500

    def test_sparse_bound_at_depth(self, rng):
        pts = rng.random((50, 2))
        system = HypercubeSystem(2, ((0.0, 1.0), (0.0, 1.0)), 50)
        tree = coefficients_from_leaves(points_to_measure(pts, system))
        assert len(tree.coeffs) <= 50 * 50

    def test_dim_order(self):
        assert fit_system(np.zeros((2, 3)) + [[0, 0, 0], [1, 1, 1]], 3, "reverse").dim_order == (3, 2, 1)
        system = HypercubeSystem(2, ((0.0, 1.0), (0.0, 1.0)), 3, (1, 1, 2))
        assert system.halving_dims() == [0, 0, 1]
        assert system.halvings_per_dim() == [2, 1]
        with pytest.raises(ConfigError):
            HypercubeSystem(2, ((0.0, 1.0), (0.0, 1.0)), 3, (3,))

    def test_degenerate_extent(self):
        system = fit_system([[1.0, 2.0], [3.0, 2.0]], 2)
        assert system.bounds[1] == (2.0, 3.0)

    def test_common_systems(self, rng):
        a = rng.random((100, 2)) * [1, 2]
        b = rng.random((80, 2)) * [3, 1] + 10
        sa, sb = fit_common_systems([a, b], 6)
        ext = [hi - lo for lo, hi in sa.bounds]
        assert ext == pytest.approx([hi - lo for lo, hi in sb.bounds])
        assert ext == pytest.approx([max(np.ptp(a[:, 0]), np.ptp(b[:, 0])), max(np.ptp(a[:, 1]), np.ptp(b[:, 1]))])
        points_to_measure(a, sa)
        points_to_measure(b, sb)

    def test_median_alignment(self, rng):
        a = rng.random((101, 2))
        b = rng.random((51, 2)) * 2 + 5
        sa, sb = fit_common_systems([a, b], 6, median_align=True)
        ua = sa.normalize(np.median(a, axis=0)[None])
        ub = sb.normalize(np.median(b, axis=0)[None])
        np.testing.assert_allclose(ua, ub, atol=1e-12)
        points_to_measure(a, sa)
        points_to_measure(b, sb)

    def test_labeled_cells(self):
        system = HypercubeSystem(1, ((0.0, 1.0),), 2)
        cells = labeled_cells([0.1, 0.15, 0.6, 0.9], ["g", "t", "g", "g"], system)
        assert cells == {0: frozenset({"g", "t"}), 2: frozenset({"g"}), 3: frozenset({"g"})}

    def test_read_points(self, tmp_path):
        path = tmp_path / "p.csv"
        path.write_text("# x,y,label\n0.1,0.2,a\n0.3,0.4,b\n")
        pts, labels = read_points(path, label_column=-1)
        assert pts.tolist() == [[0.1, 0.2], [0.3, 0.4]] and labels == ["a", "b"]
        path.write_text("0.1,0.2\n0.3,oops\n")
        with pytest.raises(IngestError, match=":2"):
            read_points(path)


class TestFeatures:
    def test_examples(self):
        pts = [{"x": v} for v in (1, 2, 3, 4)]
        always = FeatureSystem((ThresholdPredicate("pos", "x", ">", 0),))
        assert feature_system_measure(pts, always).coefficient((0, 0)) == 1
        half = FeatureSystem((ThresholdPredicate("big", "x", ">", 2),))
        assert feature_system_measure(pts, half).coefficient((0, 0)) == 0

    def test_all_combinations(self):
        pts = [(0, 0), (0, 1), (1, 0), (1, 1)]
        system = FeatureSystem((ThresholdPredicate("a", 0, ">", 0.5), ThresholdPredicate("b", 1, ">", 0.5)))
        tree = feature_system_measure(pts, system)
        assert tree.total_mass == 4
        assert [tree.coefficient(n) for n in [(0, 0), (1, 0), (1, 1)]] == [0, 0, 0]

    def test_true_goes_left(self):
        system = FeatureSystem((ThresholdPredicate("a", 0, ">", 0.5), ThresholdPredicate("b", 1, ">", 0.5)))
        tree = feature_system_measure([(1, 0), (1, 0), (1, 1)], system)
        assert tree.coefficient((0, 0)) == 1
        assert tree.coefficient((1, 0)) == pytest.approx(-1 / 3)

    def test_predicate_failure_names_predicate(self):
        system = FeatureSystem((Predicate("boom", lambda p: p["missing"]),))
        with pytest.raises(IngestError, match="boom"):
            feature_system_measure([{}], system)

    def test_complementary_pair_rejected(self):
        with pytest.raises(ConfigError):
            FeatureSystem((ThresholdPredicate("a", 0, ">", 1.0), ThresholdPredicate("b", 0, "<=", 1.0)))

    def test_from_config(self, tmp_path):
        path = tmp_path / "f.json"
        path.write_text('{"features": [{"name": "hot", "column": 0, "op": ">=", "value": 30}]}')
        system = FeatureSystem.load(path)
        assert system.depth == 1 and system.predicates[0]([31])
        with pytest.raises(ConfigError):
            FeatureSystem.from_config([{"column": 0, "op": "~", "value": 1}])
