"""Tests for smoothing samplers, thinning and functional evaluation."""

import math

import numpy as np
import pytest
from scipy import stats

from mlts.errors import ContractViolation
from mlts.kalman import (
    LinearGaussianParams,
    filter_moments,
    exact_filter_map,
    quantile_coupling_proxy,
)
from mlts.models import make_linear_gaussian, simulate_truth
from mlts.sampling import (
    CoupledSamplePair,
    Functional,
    SmoothingSample,
    custom,
    discounted_sum,
    eval_functional,
    observation_values,
    sample_coupled,
    sample_single,
    terminal_state,
    thin_base,
)
from mlts.transport import MapComposition, build_level_maps, identity_pair_map


def identity_composition(level, n_obs):
    n_steps = 2**level * n_obs
    return MapComposition([identity_pair_map() for _ in range(n_steps)],
                          level, n_obs)


@pytest.fixture(scope="module")
def lg_maps():
    model, obs_model = make_linear_gaussian()
    _, obs = simulate_truth(model, obs_model, seed=0)
    maps = {l: build_level_maps(model, obs_model, obs, l, tol=1e-5)
            for l in range(4)}
    return model, obs, maps


class TestSmoothingSample:
    def test_grid_length_enforced(self):
        SmoothingSample(1, np.zeros(9))
        with pytest.raises(ContractViolation):
            SmoothingSample(2, np.zeros(10))

    def test_observation_values(self):
        sample = SmoothingSample(1, np.arange(9.0))
        np.testing.assert_allclose(observation_values(sample), [0, 2, 4, 6, 8])
        assert sample.n_obs == 4


class TestFunctionals:
    def test_terminal_state(self):
        sample = SmoothingSample(0, np.array([0.2, -0.4, 1.7]))
        assert eval_functional(terminal_state(), sample) == 1.7

    def test_discounted_sum_two_nodes(self):
        sample = SmoothingSample(0, np.array([1.0, 1.0]))
        got = eval_functional(discounted_sum(kappa=2.0), sample)
        assert abs(got - (math.exp(-2) + 1)) < 1e-15

    def test_level_independence(self):
        obs_vals = np.array([0.3, -1.2, 0.8])
        coarse = SmoothingSample(0, obs_vals)
        fine_values = np.zeros(9)
        fine_values[::4] = obs_vals
        fine = SmoothingSample(2, fine_values)
        for phi in (terminal_state(), discounted_sum(2.0),
                    custom(lambda x: np.sum(x * x, axis=-1))):
            assert eval_functional(phi, coarse) == eval_functional(phi, fine)

    def test_batch_axis(self):
        values = np.arange(12.0).reshape(4, 3)
        sample = SmoothingSample(0, values)
        np.testing.assert_allclose(eval_functional(terminal_state(), sample),
                                   values[:, -1])

    def test_invalid_kinds(self):
        with pytest.raises(ContractViolation):
            Functional("running_max")
        with pytest.raises(ContractViolation):
            Functional("discounted_sum")
        with pytest.raises(ContractViolation):
            Functional("custom")


class TestThinBase:
    def test_three_coordinates(self):
        np.testing.assert_allclose(thin_base(np.array([1.0, 2.0, 3.0])), [1, 3])

    def test_five_coordinates(self):
        z = np.arange(5.0)
        np.testing.assert_allclose(thin_base(z), z[[0, 2, 4]])

    def test_even_length_rejected(self):
        for n in (0, 1, 2, 4, 8):
            with pytest.raises(ContractViolation):
                thin_base(np.zeros(n))

    def test_thinned_vector_stays_standard_normal(self):
        rng = np.random.default_rng(0)
        z = rng.standard_normal((10_000, 5))
        thinned = thin_base(z)
        assert thinned.shape == (10_000, 3)
        for j in range(3):
            assert stats.kstest(thinned[:, j], "norm").pvalue > 0.01


class TestSampleSingle:
    def test_identity_maps_terminal_mean(self):
        maps = identity_composition(1, 2)
        n = 4000
        samples, (est,) = sample_single(maps, n, 11, functionals=[terminal_state()])
        assert samples.values.shape == (n, maps.n_nodes)
        assert abs(est) < 3 / math.sqrt(n)

    def test_matches_kalman_terminal_moments(self, lg_maps):
        model, obs, maps = lg_maps
        params = LinearGaussianParams.from_models(model)
        level, n = 2, 20_000
        samples, (est,) = sample_single(maps[level], n, 5,
                                        functionals=[terminal_state()])
        state = filter_moments(params, obs, level, k=model.n_obs)
        se = state.upd_std / math.sqrt(n)
        assert abs(est - state.upd_mean) < 3 * se + 2e-3

    def test_seed_determinism(self, lg_maps):
        _, _, maps = lg_maps
        a, _ = sample_single(maps[1], 1, 7)
        b, _ = sample_single(maps[1], 1, 7)
        np.testing.assert_array_equal(a.values, b.values)

    def test_rejects_empty_batch(self, lg_maps):
        _, _, maps = lg_maps
        with pytest.raises(ContractViolation):
            sample_single(maps[0], 0, 1)

    def test_standard_error_scaling(self):
        # sd of the estimator over replicates should fall like 1/sqrt(n)
        maps = identity_composition(0, 1)
        phi = terminal_state()
        sizes = [100, 1_000, 10_000]
        sds = []
        for j, n in enumerate(sizes):
            reps = [sample_single(maps, n, 1000 * j + r, functionals=[phi])[1][0]
                    for r in range(150)]
            sds.append(np.std(reps, ddof=1))
        slope = np.polyfit(np.log10(sizes), np.log10(sds), 1)[0]
        assert abs(slope + 0.5) < 0.1


class TestSampleCoupled:
    def test_level_contract(self, lg_maps):
        _, _, maps = lg_maps
        with pytest.raises(ContractViolation):
            sample_coupled(maps[2], maps[0], 10, 0)
        with pytest.raises(ContractViolation):
            sample_coupled(maps[1], maps[1], 10, 0)

    def test_pair_shapes_and_thinning(self, lg_maps):
        _, _, maps = lg_maps
        pair = sample_coupled(maps[2], maps[1], 64, 9)
        assert pair.fine.values.shape == (64, maps[2].n_nodes)
        assert pair.coarse.values.shape == (64, maps[1].n_nodes)

    def test_shared_seed_recorded_and_reproducible(self, lg_maps):
        _, _, maps = lg_maps
        one = sample_coupled(maps[1], maps[0], 16, 123)
        two = sample_coupled(maps[1], maps[0], 16, 123)
        assert one.shared_seed == 123
        np.testing.assert_array_equal(one.fine.values, two.fine.values)
        np.testing.assert_array_equal(one.coarse.values, two.coarse.values)
        rng = np.random.default_rng(0)
        assert sample_coupled(maps[1], maps[0], 4, rng).shared_seed is None

    @pytest.mark.parametrize("fine_level", [1, 2, 3])
    def test_coarse_marginal_matches_single_level(self, lg_maps, fine_level):
        # seeds fixed per the seeded-randomness policy; the coarse marginal
        # is an identical pushforward, so a real defect fails at any seed
        _, _, maps = lg_maps
        n = 10_000
        pair = sample_coupled(maps[fine_level], maps[fine_level - 1], n, 21)
        singles, _ = sample_single(maps[fine_level - 1], n, 22)
        for node in (0, maps[fine_level - 1].n_steps // 2, -1):
            p = stats.ks_2samp(pair.coarse.values[:, node],
                               singles.values[:, node]).pvalue
            assert p > 0.01, f"node {node}"

    def test_pair_type_validates_levels(self):
        fine = SmoothingSample(2, np.zeros(9))
        with pytest.raises(ContractViolation):
            CoupledSamplePair(fine, SmoothingSample(0, np.zeros(3)))


class TestExactMapCoupling:
    """Couple exact terminal filter maps across levels with a shared draw."""

    def _terminal_diffs(self, params, obs, level, k, n, seed):
        fine = exact_filter_map(filter_moments(params, obs, level, k))
        coarse = exact_filter_map(filter_moments(params, obs, level - 1, k))
        z = np.random.default_rng(seed).standard_normal(n)
        return fine(z) - coarse(z)

    def test_second_moment_decay_slope(self):
        model, obs_model = make_linear_gaussian()
        _, obs = simulate_truth(model, obs_model, seed=0)
        params = LinearGaussianParams.from_models(model)
        k = model.n_obs
        levels = np.arange(2, 9)
        moments = [np.mean(self._terminal_diffs(params, obs, l, k, 20_000, l) ** 2)
                   for l in levels]
        slope = -np.polyfit(levels, np.log2(moments), 1)[0]
        assert 1.7 < slope < 2.3

    def test_matches_quantile_proxy(self):
        model, obs_model = make_linear_gaussian()
        _, obs = simulate_truth(model, obs_model, seed=0)
        params = LinearGaussianParams.from_models(model)
        k = model.n_obs
        levels = range(2, 7)
        proxy = quantile_coupling_proxy(params, obs, k, levels=levels)
        for i, l in enumerate(levels):
            sampled = np.mean(
                self._terminal_diffs(params, obs, l, k, 20_000, 100 + l) ** 2)
            assert 0.5 < sampled / proxy[i] < 2.0, f"level {l}"
