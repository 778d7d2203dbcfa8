"""Acceptance suite: nine numbered criteria, one pass/fail line each.

Each test records a "criterion N (...): PASS/FAIL" line as a test property;
conftest.py replays the scoreboard after the run summary so it survives
output capture. Sample counts and tolerances are fixed by the criteria;
seeds are frozen so every run is deterministic.
"""

import math
import time

import numpy as np
import pytest
from scipy import stats

from mlts.config import ExperimentConfig
from mlts.discretization import simulate_coupled_pair, simulate_path
from mlts.harness import run_ml_vs_highest, run_rates
from mlts.kalman import (
    LinearGaussianParams,
    exact_filter_map,
    filter_moments,
    quantile_coupling_proxy,
)
from mlts.mlpf import CoupledEnsemble, coupled_resample
from mlts.models import make_linear_gaussian, simulate_truth
from mlts.multilevel import allocate, rate_fit
from mlts.reporting import read_csv
from mlts.sampling import sample_single, terminal_state
from mlts.transport import (
    PairTarget,
    build_level_maps,
    fit_pair_map,
    identity_pair_map,
    kl_objective,
)
from mlts.validation import stream_rng


_record_property = None


@pytest.fixture(autouse=True)
def _criterion_recorder(record_property):
    # makes record_property reachable from the plain _criterion helper
    global _record_property
    _record_property = record_property
    yield
    _record_property = None


def _criterion(number, name, passed, detail=""):
    status = "PASS" if passed else "FAIL"
    line = f"criterion {number} ({name}): {status}"
    if detail:
        line += f" [{detail}]"
    if _record_property is not None:
        _record_property("criterion", line)
    assert passed, line


@pytest.fixture(scope="module")
def lg():
    model, obs_model = make_linear_gaussian()
    _, record = simulate_truth(model, obs_model, seed=0)
    params = LinearGaussianParams.from_models(model)
    return model, obs_model, record, params


def test_criterion_1_exact_map_proxy_rate(lg):
    model, _, record, params = lg
    start = time.perf_counter()
    levels = list(range(2, 9))
    proxy = quantile_coupling_proxy(params, record, len(record) - 1, levels)
    slope, _, _ = rate_fit([2.0**-l for l in levels], proxy)
    elapsed = time.perf_counter() - start
    _criterion(1, "exact-map coupling proxy decays at rate 2",
               abs(slope - 2.0) <= 0.3 and elapsed < 1.0,
               f"slope {slope:.3f}, {elapsed * 1000:.0f} ms")


def test_criterion_2_fitted_coupled_variance_rate(tmp_path):
    config = ExperimentConfig(levels=5, order=4, quad_order=10, tol=1e-4,
                              rate_pairs=10_000, seed=0,
                              out_dir=str(tmp_path))
    run_rates(config)
    _, fits = read_csv(tmp_path / "rates_fits.csv")
    (slope_var, _, _, slope_cost, _, _) = fits[0]
    _criterion(2, "fitted-map variance decay and unit cost growth",
               1.5 <= slope_var <= 2.5 and abs(slope_cost + 1.0) < 1e-12,
               f"variance slope {slope_var:.3f}, cost slope {slope_cost:.3f}")


def test_criterion_3_single_level_matches_kalman(lg):
    model, obs_model, record, params = lg
    maps = build_level_maps(model, obs_model, record, 4, tol=1e-4)
    n = 100_000
    sample, (estimate,) = sample_single(maps, n, stream_rng(0, 301),
                                        functionals=[terminal_state()])
    se = float(sample.values[:, -1].std(ddof=1)) / math.sqrt(n)
    state = filter_moments(params, record, 4, model.n_obs)
    error = abs(estimate - state.upd_mean)
    _criterion(3, "single-level estimate matches the exact filter mean",
               error <= 3 * se + 2e-3,
               f"error {error:.2e}, bound {3 * se + 2e-3:.2e}")


def test_criterion_4_exact_map_telescoping_unbiased(lg):
    model, _, record, params = lg
    L, n0 = 4, 16_000
    counts = allocate(2000, 2.0, 1.0, L)
    maps = [exact_filter_map(filter_moments(params, record, level,
                                            model.n_obs))
            for level in range(L + 1)]
    estimates = np.empty(50)
    for r in range(50):
        gen = stream_rng(0, 401, r)
        value = float(np.mean(maps[0](gen.standard_normal(n0))))
        for level in range(1, L + 1):
            z = gen.standard_normal(counts[level - 1])
            value += float(np.mean(maps[level](z) - maps[level - 1](z)))
        estimates[r] = value
    target = filter_moments(params, record, L, model.n_obs).upd_mean
    pooled_se = estimates.std(ddof=1) / math.sqrt(estimates.size)
    error = abs(estimates.mean() - target)
    _criterion(4, "exact-map telescoping is unbiased for the level-L mean",
               error <= 3 * pooled_se,
               f"error {error:.2e}, 3 pooled se {3 * pooled_se:.2e}")


def test_criterion_5_maximal_coupling_resampling():
    n = 100_000
    w_fine = np.zeros(n)
    w_fine[:2] = (0.7, 0.3)
    w_coarse = np.zeros(n)
    w_coarse[:2] = (0.4, 0.6)
    carriers = np.arange(n, dtype=float)
    ensemble = CoupledEnsemble(carriers, carriers.copy(), w_fine, w_coarse,
                               level=1, time=0)
    out = coupled_resample(ensemble, stream_rng(0, 501))
    fine_idx = out.fine.astype(int)
    coarse_idx = out.coarse.astype(int)
    rho = 0.7  # min(0.7, 0.4) + min(0.3, 0.6)

    checks = []
    for idx, weights in ((fine_idx, (0.7, 0.3)), (coarse_idx, (0.4, 0.6))):
        for i, p in enumerate(weights):
            freq = float(np.mean(idx == i))
            se = math.sqrt(p * (1 - p) / n)
            checks.append(abs(freq - p) <= 3 * se)
    # residual supports are disjoint, so ancestors agree exactly when the
    # shared branch fires
    shared = float(np.mean(fine_idx == coarse_idx))
    se_rho = math.sqrt(rho * (1 - rho) / n)
    checks.append(abs(shared - rho) <= 3 * se_rho)
    _criterion(5, "maximal-coupling resampling marginals and overlap",
               all(checks),
               f"shared {shared:.4f} vs rho {rho}, marginals "
               f"{sum(checks[:4])}/4 within 3 se")


def test_criterion_6_coupled_coarse_marginal(lg):
    model, _, _, _ = lg
    n = 10_000
    worst = 1.0
    passed = True
    for level in (1, 3, 5):
        for seed in (0, 1, 2):
            gen = stream_rng(seed, 601, level)
            x0 = model.initial_mean + model.initial_std * gen.standard_normal(n)
            _, coarse = simulate_coupled_pair(model, level, x0, x0.copy(),
                                              gen)
            gen_ref = stream_rng(seed, 602, level)
            x0_ref = (model.initial_mean
                      + model.initial_std * gen_ref.standard_normal(n))
            reference = simulate_path(model, level - 1, x0_ref, gen_ref)
            p_value = stats.ks_2samp(coarse[:, -1], reference[:, -1]).pvalue
            worst = min(worst, p_value)
            passed = passed and p_value > 0.01
    _criterion(6, "coupled coarse endpoints match independent simulation",
               passed, f"smallest KS p-value {worst:.3f} at alpha 0.01")


def test_criterion_7_multilevel_dominates_highest_level(tmp_path):
    config = ExperimentConfig(levels=4, tol=1e-4, n0=256_000,
                              batch_size=4000, replicates=20,
                              pilot_size=10_000, seed=0,
                              out_dir=str(tmp_path))
    run_ml_vs_highest(config)
    _, rows = read_csv(tmp_path / "ml_vs_highest.csv")
    _, mse_ml, mse_highest = rows[-1]
    _criterion(7, "multilevel beats the single-level run at equal cost",
               mse_ml <= mse_highest,
               f"final mse_ml {mse_ml:.2e} vs mse_highest {mse_highest:.2e}")


def _gaussian_pair(mean, cov):
    mean = np.asarray(mean, dtype=float)
    prec = np.linalg.inv(np.asarray(cov, dtype=float))

    def log_density(u, v):
        du, dv = u - mean[0], v - mean[1]
        return -0.5 * (prec[0, 0] * du * du + 2 * prec[0, 1] * du * dv
                       + prec[1, 1] * dv * dv)

    def grad(u, v):
        du, dv = u - mean[0], v - mean[1]
        return (-(prec[0, 0] * du + prec[0, 1] * dv),
                -(prec[0, 1] * du + prec[1, 1] * dv))

    return PairTarget("interior", log_density, grad)


def test_criterion_8_transport_fitting_oracle():
    mean = np.array([0.3, -0.2])
    cov = np.array([[1.0, 0.6], [0.6, 1.3]])
    target = _gaussian_pair(mean, cov)
    fitted = fit_pair_map(target, tol=1e-4)

    z = np.linspace(-3.0, 3.0, 201)
    sd_first = math.sqrt(cov[1, 1])
    t1 = fitted.components[0].evaluate(z)
    err1 = float(np.max(np.abs(t1 - (mean[1] + sd_first * z))))
    z1, z2 = np.meshgrid(z[::10], z[::10], indexing="ij")
    t2 = fitted.components[1].evaluate(np.stack([z1, z2], axis=-1))
    slope = cov[0, 1] / sd_first
    cond_sd = math.sqrt(cov[0, 0] - cov[0, 1] ** 2 / cov[1, 1])
    err2 = float(np.max(np.abs(t2 - (mean[0] + slope * z1 + cond_sd * z2))))

    pair = identity_pair_map()
    rng = np.random.default_rng(8)
    for comp in pair.components:
        comp.a_coeffs += 0.05 * rng.standard_normal(comp.a_coeffs.size)
        comp.b_coeffs += 0.05 * rng.standard_normal(comp.b_coeffs.size)
    _, grad = kl_objective(pair, target)
    arrays = [pair.components[0].a_coeffs, pair.components[0].b_coeffs,
              pair.components[1].a_coeffs, pair.components[1].b_coeffs]
    eps = 1e-5
    worst_fd = 0.0
    position = 0
    for coeffs in arrays:
        for i in range(coeffs.size):
            original = coeffs[i]
            coeffs[i] = original + eps
            up, _ = kl_objective(pair, target)
            coeffs[i] = original - eps
            down, _ = kl_objective(pair, target)
            coeffs[i] = original
            fd = (up - down) / (2 * eps)
            worst_fd = max(worst_fd, abs(fd - grad[position]))
            position += 1

    _criterion(8, "known map recovered and KL gradient verified",
               err1 < 1e-3 and err2 < 1e-3 and worst_fd < 1e-5,
               f"sup errors {err1:.1e}/{err2:.1e}, worst gradient "
               f"mismatch {worst_fd:.1e}")


def test_criterion_9_allocation_formula():
    counts = allocate(1024, 2.0, 1.0, 5)
    expected = [1024, 362, 128, 45, 16]
    _criterion(9, "sample allocation matches the frozen values",
               counts == expected, f"{counts}")
