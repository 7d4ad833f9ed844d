import json
import math
import warnings

import numpy as np
import pytest

from conftest import random_tree
from dyadic_measures import (
    CoefficientTree,
    ConfigError,
    LeafMeasure,
    NoiseParams,
    ShapeError,
    apply_noise,
    check_kahane,
    check_perturbation,
    coefficients_from_leaves,
    dirac_coefficients,
    noisy_coefficient_stats,
    reconstruct_leaves,
    sample_noise_field,
    validate,
)
from dyadic_measures.noise import KAHANE_BOUND, node_normals, sample_seed, total_mass_samples


def bounded_tree(rng, depth, bound):
    levels = [rng.uniform(-bound, bound, 1 << s) for s in range(depth)]
    return CoefficientTree.from_levels(1.0, levels)


def brute_log_multipliers(params, z):
    """Oracle: walk every cell's ancestor path one node at a time."""
    n = params.depth
    out = []
    for cell in range(1 << n):
        total = 0.0
        for s in range(n):
            i = cell >> (n - s)
            h = 1.0 if ((cell >> (n - s - 1)) & 1) == 0 else -1.0
            sigma = params.scale_sigmas(s)[i]
            total += sigma * z[s][i] * h - sigma * sigma / 2
        out.append(total)
    return np.array(out)


class TestParams:
    def test_per_scale_requires_every_scale(self):
        with pytest.raises(ConfigError, match="missing"):
            NoiseParams("per-scale", 3, {0: 0.1, 1: 0.1})

    def test_per_node_defaults_to_zero(self):
        p = NoiseParams("per-node", 2, {(1, 1): 0.3})
        assert p.scale_sigmas(0).tolist() == [0.0]
        assert p.scale_sigmas(1).tolist() == [0.0, 0.3]

    @pytest.mark.parametrize("bad", [{0: -1.0}, {0: float("nan")}, {5: 0.1}])
    def test_invalid_sigma(self, bad):
        with pytest.raises(ConfigError):
            NoiseParams("per-scale", 1, bad)

    def test_json_round_trip(self, tmp_path):
        for p in (NoiseParams.uniform(0.25, 4), NoiseParams("per-node", 3, {(0, 0): 0.1, (2, 3): 0.7})):
            path = tmp_path / "p.json"
            path.write_text(json.dumps(p.to_obj()))
            assert NoiseParams.load(path) == p

    def test_list_form(self):
        p = NoiseParams.from_obj({"mode": "per-scale", "depth": 2, "sigmas": [0.1, 0.2]})
        assert p.sigmas == {0: 0.1, 1: 0.2}


class TestConditions:
    def test_kahane_examples(self):
        assert check_kahane(NoiseParams.uniform(1.0, 3))
        assert not check_kahane(NoiseParams.uniform(1.2, 3))
        result = check_kahane(NoiseParams.uniform(0.0, 3))
        assert result.ok and result.margin == KAHANE_BOUND == 2 * math.log(2)

    def test_perturbation_examples(self, rng):
        uniform = CoefficientTree(3, 1.0, {})
        assert check_perturbation(uniform, NoiseParams.uniform(0.1, 3), 0.5)
        extreme = CoefficientTree(3, 1.0, {(1, 0): 1.0})
        for eps in (1e-9, 0.1, 1.0):
            assert not check_perturbation(extreme, NoiseParams.uniform(0.0, 3), eps)
        half = CoefficientTree(2, 1.0, {(0, 0): 0.5, (1, 1): -0.2})
        assert not check_perturbation(half, NoiseParams.uniform(math.sqrt(0.3), 2), 0.5)
        assert check_perturbation(half, NoiseParams.uniform(0.2, 2), 0.5)


class TestField:
    def test_zero_sigma(self):
        for seed in (0, 1, 2**63):
            f = sample_noise_field(NoiseParams.uniform(0.0, 4), seed)
            assert f.multipliers.tolist() == [1.0] * 16
            assert f.normalization == 1.0
            assert f.measure().masses.tolist() == [1 / 16] * 16

    def test_forced_zero_draws(self):
        f = sample_noise_field(NoiseParams.uniform(1.0, 1), 7, z=[[0.0]])
        assert f.multipliers.tolist() == [math.exp(-0.5)] * 2
        assert f.normalization == math.exp(-0.5)
        assert f.density.tolist() == [1.0, 1.0]

    def test_matches_path_oracle(self, rng):
        params = NoiseParams("per-node", 4, {(s, i): rng.uniform(0, 1) for s in range(4) for i in range(1 << s)})
        z = [rng.normal(size=1 << s) for s in range(4)]
        f = sample_noise_field(params, 0, z=z)
        np.testing.assert_allclose(f.log_multipliers, brute_log_multipliers(params, z), rtol=0, atol=1e-14)
        assert f.normalization == pytest.approx(np.mean(np.exp(f.log_multipliers)), rel=1e-15)

    def test_deterministic(self):
        params = NoiseParams.uniform(0.7, 6)
        a = sample_noise_field(params, 123)
        b = sample_noise_field(params, 123)
        assert a.log_multipliers.tobytes() == b.log_multipliers.tobytes()
        assert a.normalization == b.normalization
        assert sample_noise_field(params, 124).log_multipliers.tobytes() != a.log_multipliers.tobytes()

    def test_frozen_draws(self):
        # pins the sampler so a silent change of algorithm is caught
        z = node_normals(np.array([42, 42], dtype=np.uint64), 2)
        expected = [0.22555024972618107, 0.6725787304627121, -1.1992696950896917, 0.33588617968475526]
        np.testing.assert_allclose(z[0], expected, rtol=1e-15)
        assert np.array_equal(z[0], z[1])
        assert int(sample_seed(42, 3)[0]) == 10071422832405270358

    def test_normals_look_standard(self):
        z = node_normals(sample_seed(5, np.arange(4000, dtype=np.uint64)), 3).ravel()
        assert abs(z.mean()) < 4 / math.sqrt(z.size)
        assert abs(z.var() - 1) < 0.05
        # draws at different nodes of one sample are uncorrelated
        per_node = node_normals(sample_seed(5, np.arange(4000, dtype=np.uint64)), 1)
        assert abs(np.corrcoef(per_node.T)[0, 1]) < 0.06

    def test_martingale_small(self):
        params = NoiseParams.uniform(0.8, 5)
        e = total_mass_samples(params, 4000, seed=11)
        assert abs(e.mean() - 1) < 4 * e.std(ddof=1) / math.sqrt(e.size)

    def test_shape_of_forced_draws(self):
        with pytest.raises(ShapeError):
            sample_noise_field(NoiseParams.uniform(1.0, 2), 0, z=[[0.0], [0.0]])


class TestApplyNoise:
    def test_zero_sigma_is_identity(self, rng):
        tree = random_tree(rng, 5, total=3.0)
        assert apply_noise(tree, NoiseParams.uniform(0.0, 5), 99) is tree

    def test_total_mass_and_validity(self, rng):
        tree = bounded_tree(rng, 6, 0.5)
        tree = tree.with_total_mass(7.25)
        for seed in range(20):
            noisy = apply_noise(tree, NoiseParams.uniform(0.3, 6), seed)
            assert noisy.total_mass == 7.25
            assert validate(noisy) == []

    def test_dy_normalisation(self, rng):
        tree = bounded_tree(rng, 4, 0.5)
        params = NoiseParams.uniform(0.3, 4)
        a = apply_noise(tree, params, 5, normalize="mass")
        b = apply_noise(tree, params, 5, normalize="dy")
        assert dict(a.coeffs) == dict(b.coeffs)
        f = sample_noise_field(params, 5)
        expected = np.sum(reconstruct_leaves(tree).masses * f.multipliers) / f.normalization
        assert b.total_mass == pytest.approx(expected, rel=1e-13)

    def test_matches_direct_construction(self, rng):
        tree = bounded_tree(rng, 5, 0.5)
        params = NoiseParams.uniform(0.4, 5)
        f = sample_noise_field(params, 3)
        direct = coefficients_from_leaves(LeafMeasure(5, reconstruct_leaves(tree).masses * f.multipliers))
        assert dict(apply_noise(tree, params, 3).coeffs) == dict(direct.coeffs)

    def test_zero_cells_stay_zero(self):
        tree = dirac_coefficients(0.3, 6)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            noisy = apply_noise(tree, NoiseParams.uniform(0.5, 6), 1)
        leaves = reconstruct_leaves(noisy).masses
        assert np.count_nonzero(leaves) == 1 and leaves[int(0.3 * 64)] == pytest.approx(1.0, rel=1e-15)
        assert dict(noisy.coeffs) == dict(tree.coeffs)

    def test_warns_outside_perturbation_bounds(self, rng):
        tree = bounded_tree(rng, 3, 0.5)
        with pytest.warns(UserWarning, match="perturbation"):
            apply_noise(tree, NoiseParams.uniform(0.9, 3), 0)

    def test_depth_mismatch(self):
        with pytest.raises(ShapeError):
            apply_noise(CoefficientTree(3, 1.0, {}), NoiseParams.uniform(0.1, 4), 0)


class TestStats:
    def test_zero_sigma(self, rng):
        tree = random_tree(rng, 4)
        st = noisy_coefficient_stats(tree, NoiseParams.uniform(0.0, 4), 100, 1)
        assert np.array_equal(st.mean, st.original)
        assert not np.any(st.variance)

    def test_uniform_tree_is_centred(self):
        st = noisy_coefficient_stats(CoefficientTree(4, 1.0, {}), NoiseParams.uniform(0.3, 4), 10_000, 2016)
        assert np.all(np.abs(st.mean) < 3 * st.stderr)

    def test_sample_k_is_apply_noise(self, rng):
        tree = bounded_tree(rng, 4, 0.5)
        params = NoiseParams.uniform(0.3, 4)
        st = noisy_coefficient_stats(tree, params, 3, 77, batch_size=2)
        samples = [apply_noise(tree, params, int(sample_seed(77, k)[0])) for k in range(3)]
        flat = np.array([[t.coefficient(n) for n in st.nodes] for t in samples])
        np.testing.assert_allclose(st.mean, flat.mean(axis=0), rtol=0, atol=1e-15)
        np.testing.assert_allclose(st.variance, flat.var(axis=0, ddof=1), rtol=1e-9, atol=1e-18)

    def test_batching_does_not_matter(self, rng):
        tree = bounded_tree(rng, 4, 0.5)
        params = NoiseParams.uniform(0.3, 4)
        a = noisy_coefficient_stats(tree, params, 500, 4, batch_size=64)
        b = noisy_coefficient_stats(tree, params, 500, 4, batch_size=500)
        np.testing.assert_allclose(a.mean, b.mean, rtol=0, atol=1e-15)

    def test_variance_grows_with_sigma(self, rng):
        tree = bounded_tree(rng, 3, 0.3)
        v = [noisy_coefficient_stats(tree, NoiseParams.uniform(s, 3), 2000, 9).variance.sum() for s in (0.1, 0.2, 0.4)]
        assert v[0] < v[1] < v[2]

    def test_mean_bias_matches_second_order_prediction(self):
        # E[tanh(atanh(a) + X)] for small symmetric X is a - sigma_eff**2 * a * (1 - a**2):
        # noisy coefficients are biased towards 0, so their mean is not the original
        a = 0.5
        tree = CoefficientTree(1, 1.0, {(0, 0): a})
        sigma = 0.2
        st = noisy_coefficient_stats(tree, NoiseParams.uniform(sigma, 1), 20_000, 1)
        # at depth 1 the log ratio of the halves is 2*b, so a_noisy = tanh(atanh(a) + b)
        predicted = a - sigma**2 * a * (1 - a * a)
        assert st.mean[0] == pytest.approx(predicted, abs=4 * st.stderr[0] + 1e-3)
        assert st.mean[0] < a - 4 * st.stderr[0]

    def test_noisy_masses_are_unbiased(self, rng):
        # the noise is a martingale on masses: E[mu_noisy(L)] under dy normalisation matches mu(L)
        tree = bounded_tree(rng, 3, 0.5)
        params = NoiseParams.uniform(0.2, 3)
        base = reconstruct_leaves(tree).masses
        n = 10_000
        logm = np.array([sample_noise_field(params, int(sample_seed(8, k)[0])).log_multipliers for k in range(n)])
        masses = base[None, :] * np.exp(logm)
        mean, se = masses.mean(axis=0), masses.std(axis=0, ddof=1) / math.sqrt(n)
        assert np.all(np.abs(mean - base) < 4 * se)

    def test_csv(self, rng):
        tree = bounded_tree(rng, 3, 0.5)
        st = noisy_coefficient_stats(tree, NoiseParams.uniform(0.1, 3), 10, 0)
        lines = st.to_csv(comment="c").splitlines()
        assert lines[0] == "# c" and lines[1].startswith("node,scale,index")
        assert len(lines) == 2 + 7
