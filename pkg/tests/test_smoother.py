"""Tests for the estimator-style smoother wrappers."""

import math

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from mlts.errors import ContractViolation
from mlts.kalman import LinearGaussianParams, filter_moments
from mlts.models import make_linear_gaussian, simulate_truth
from mlts.smoother import MultilevelTransportSmoother, TransportSmoother


@pytest.fixture(scope="module")
def lg_obs():
    model, obs_model = make_linear_gaussian()
    _, obs = simulate_truth(model, obs_model, seed=0)
    return model, obs


class TestTransportSmoother:
    def test_params_roundtrip_and_clone(self):
        est = TransportSmoother(level=2, tol=1e-3)
        assert est.get_params()["level"] == 2
        twin = clone(est)
        assert twin.get_params() == est.get_params()

    def test_unfitted_raises(self):
        with pytest.raises(NotFittedError):
            TransportSmoother().sample(3)

    def test_fit_sample_estimate(self, lg_obs):
        model, obs = lg_obs
        est = TransportSmoother(level=2, tol=1e-5).fit(obs)
        paths = est.sample(5000, random_state=0)
        assert paths.shape == (5000, est.n_nodes_)
        params = LinearGaussianParams.from_models(model)
        state = filter_moments(params, obs, 2, k=model.n_obs)
        se = state.upd_std / math.sqrt(5000)
        assert abs(paths[:, -1].mean() - state.upd_mean) < 4 * se + 2e-3
        value = est.estimate(n=2000, random_state=1)
        assert abs(value - state.upd_mean) < 5 * se + 2e-3

    def test_accepts_plain_value_vector(self, lg_obs):
        _, obs = lg_obs
        est = TransportSmoother(level=0, tol=1e-3).fit(np.asarray(obs.values))
        assert est.maps_.n_steps == len(obs) - 1

    def test_rejects_wrong_observation_count(self, lg_obs):
        with pytest.raises(ContractViolation):
            TransportSmoother(level=0).fit(np.zeros(3))


class TestMultilevelTransportSmoother:
    def test_estimate_matches_kalman(self, lg_obs):
        model, obs = lg_obs
        est = MultilevelTransportSmoother(max_level=2, tol=1e-5, n0=20_000,
                                          n1=4000).fit(obs)
        result = est.estimate(random_state=0)
        params = LinearGaussianParams.from_models(model)
        target = filter_moments(params, obs, 2, k=model.n_obs).upd_mean
        assert abs(result.value - target) < 4 * math.sqrt(result.total_variance)
        assert result.total_cost > 0
        assert [s.level for s in result.per_level] == [0, 1, 2]

    def test_pilot_sets_n1(self, lg_obs):
        _, obs = lg_obs
        est = MultilevelTransportSmoother(max_level=1, tol=1e-4, n0=2000,
                                          pilot_size=500).fit(obs)
        result = est.estimate(random_state=2)
        # coupled increments are far tighter than level-0 values, so the
        # pilot must allocate far fewer samples to level 1
        assert result.per_level[1].n_samples < est.n0 // 10

    def test_requires_positive_depth(self, lg_obs):
        _, obs = lg_obs
        with pytest.raises(ContractViolation):
            MultilevelTransportSmoother(max_level=0).fit(obs)
