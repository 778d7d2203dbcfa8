"""Tests for the benchmark model factories and observation machinery.

Covers drift/diffusion values at hand-computed points, log-likelihood
normalization, the Langevin drift bound, synthetic-truth generation, and
observation-record serialization.
"""

import math

import numpy as np
import pytest

from mlts.errors import ContractViolation, UnsupportedModel
from mlts.models import (
    ObservationRecord,
    make_langevin,
    make_linear_gaussian,
    make_model,
    make_nonlinear_diffusion,
    simulate_truth,
    zero_diffusion,
)


class TestLinearGaussian:
    def test_drift_and_diffusion_values(self):
        model, _ = make_linear_gaussian()
        assert np.isclose(model.drift(2.0), -0.2)
        assert np.isclose(model.diffusion(17.3), 1.0)
        assert model.dim == 1
        assert model.horizon == 4.0 and model.obs_interval == 1.0
        assert model.n_obs == 4

    def test_loglik_at_zero(self):
        _, obs_model = make_linear_gaussian()
        # log N(0; 0, 0.25^2) = log(1 / (0.25 sqrt(2 pi)))
        expected = -math.log(0.25) - 0.5 * math.log(2.0 * math.pi)
        assert np.isclose(obs_model.log_likelihood(0.0, 0.0), expected)

    def test_loglik_mean_is_state(self):
        _, obs_model = make_linear_gaussian()
        # density peaks at y = x, not y = 0
        assert obs_model.log_likelihood(1.0, 1.0) > obs_model.log_likelihood(1.0, 0.0)


class TestLangevin:
    def test_drift_values(self):
        model, _ = make_langevin()
        assert model.drift(0.0) == 0.0
        # -(nu+1) x / (2 (nu + x^2)) at nu=10, x=1 is -11/22
        assert np.isclose(model.drift(1.0), -0.5)
        assert np.isclose(model.diffusion(-3.0), 1.0)

    def test_drift_globally_bounded(self):
        model, _ = make_langevin()
        nu = model.params["nu"]
        bound = (nu + 1.0) / (4.0 * math.sqrt(nu))
        grid = np.linspace(-50.0, 50.0, 20001)
        assert np.all(np.abs(model.drift(grid)) <= bound + 1e-12)
        # the bound is attained at x = sqrt(nu)
        assert np.isclose(abs(model.drift(math.sqrt(nu))), bound)

    def test_loglik_closed_form(self):
        _, obs_model = make_langevin()
        # at x=0 the observation law is N(0, 1)
        expected = -0.5 - 0.5 * math.log(2.0 * math.pi)
        assert np.isclose(obs_model.log_likelihood(0.0, 1.0), expected)


class TestNonlinearDiffusion:
    def test_values(self):
        model, _ = make_nonlinear_diffusion()
        assert np.isclose(model.drift(1.0), 0.0)
        assert np.isclose(model.diffusion(0.0), 1.0)
        assert np.isclose(model.diffusion(1.0), 1.0 / math.sqrt(2.0))

    def test_half_unit_observations(self):
        model, _ = make_nonlinear_diffusion()
        assert model.horizon == 2.0 and model.obs_interval == 0.5
        assert model.n_obs == 4


class TestFactoryContracts:
    @pytest.mark.parametrize(
        "name", ["linear_gaussian", "langevin", "nonlinear_diffusion"]
    )
    def test_normalization(self, name):
        # exp(log_likelihood) must integrate to 1 over y for fixed x
        _, obs_model = make_model(name)
        for x in (-1.5, 0.0, 0.7, 2.0):
            ys = np.linspace(-60.0, 60.0, 400001)
            vals = np.exp(obs_model.log_likelihood(x, ys))
            integral = np.trapezoid(vals, ys)
            assert abs(integral - 1.0) < 1e-6

    @pytest.mark.parametrize(
        "name", ["linear_gaussian", "langevin", "nonlinear_diffusion"]
    )
    def test_diffusion_positive_and_finite(self, name):
        model, _ = make_model(name)
        grid = np.linspace(-20.0, 20.0, 401)
        assert np.all(model.diffusion(grid) ** 2 > 0)
        assert np.all(np.isfinite(model.drift(grid)))
        assert np.all(np.isfinite(model.diffusion(grid)))

    @pytest.mark.parametrize(
        "name", ["linear_gaussian", "langevin", "nonlinear_diffusion"]
    )
    def test_analytic_derivatives_match_finite_differences(self, name):
        model, obs_model = make_model(name)
        grid = np.linspace(-3.0, 3.0, 61)
        eps = 1e-6
        fd_drift = (model.drift(grid + eps) - model.drift(grid - eps)) / (2 * eps)
        np.testing.assert_allclose(model.drift_prime(grid), fd_drift, atol=1e-6)
        fd_diff = (model.diffusion(grid + eps) - model.diffusion(grid - eps)) / (2 * eps)
        np.testing.assert_allclose(model.diffusion_prime(grid), fd_diff, atol=1e-6)
        y = 0.8
        fd_ll = (
            obs_model.log_likelihood(grid + eps, y) - obs_model.log_likelihood(grid - eps, y)
        ) / (2 * eps)
        np.testing.assert_allclose(obs_model.log_likelihood_dx(grid, y), fd_ll, atol=1e-5)

    def test_unknown_name(self):
        with pytest.raises(UnsupportedModel):
            make_model("ornstein")


class TestSimulateTruth:
    def test_deterministic(self):
        model, obs_model = make_linear_gaussian()
        path_a, obs_a = simulate_truth(model, obs_model, seed=7)
        path_b, obs_b = simulate_truth(model, obs_model, seed=7)
        np.testing.assert_array_equal(path_a, path_b)
        assert obs_a == obs_b

    def test_observation_count(self):
        model, obs_model = make_linear_gaussian()
        _, obs = simulate_truth(model, obs_model, seed=1)
        assert len(obs) == 5
        assert obs.times == (0.0, 1.0, 2.0, 3.0, 4.0)
        model_n, obs_model_n = make_nonlinear_diffusion()
        _, obs_n = simulate_truth(model_n, obs_model_n, seed=1)
        assert obs_n.times == (0.0, 0.5, 1.0, 1.5, 2.0)

    def test_zero_diffusion_matches_ode(self):
        model, obs_model = make_linear_gaussian()
        path, _ = simulate_truth(zero_diffusion(model), obs_model, seed=3)
        x0 = path[0]
        # dX = -0.1 X dt has solution x0 exp(-0.1 t); level 10 Euler is close
        assert abs(path[-1] - x0 * math.exp(-0.1 * 4.0)) < 1e-2


class TestObservationRecord:
    def test_roundtrip(self, tmp_path):
        rec = ObservationRecord((0.0, 1.0, 2.0), (0.5, -1.25, 3.0))
        out = tmp_path / "obs.csv"
        rec.to_csv(out)
        assert ObservationRecord.from_csv(out) == rec

    def test_length_mismatch(self):
        with pytest.raises(ContractViolation):
            ObservationRecord((0.0, 1.0), (1.0,))

    def test_unsorted_times(self):
        with pytest.raises(ContractViolation):
            ObservationRecord((1.0, 0.0), (1.0, 2.0))
