"""Multilevel particle filter baseline with maximal-coupling resampling.

Each level l >= 1 runs an ensemble of fine/coarse particle pairs: the pair
advances one observation interval through the shared-noise Euler coupling,
both sides are importance-weighted against the new observation, and the
increment estimate sum_i (w^l_i phi(x^l_i) - w^{l-}_i phi(x^{l-}_i)) is
recorded before a maximally coupled resampling step. Level 0 is a plain
bootstrap filter. Summing the level-0 estimate and the increments telescopes
to a multilevel filter estimate.

Resampling happens at every observation time, with multinomial draws inside
each branch of the maximal coupling. Initial particles are drawn from the
initial law and weighted by the time-0 likelihood before any propagation.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .discretization import simulate_coupled_pair, simulate_path
from .errors import ContractViolation, WeightCollapse
from .validation import check_rng

__all__ = [
    "CoupledEnsemble",
    "MlpfLevelTrace",
    "MlpfResult",
    "coupled_resample",
    "propagate_coupled",
    "run_mlpf",
    "run_pf",
    "weight",
]

_WEIGHT_TOL = 1e-12


def _check_weights(w, n, name):
    w = np.asarray(w, dtype=float)
    if w.shape != (n,):
        raise ContractViolation(f"{name} must have shape ({n},), got {w.shape}")
    if np.any(w < 0):
        raise ContractViolation(f"{name} contains negative entries")
    if abs(w.sum() - 1.0) > _WEIGHT_TOL:
        raise ContractViolation(f"{name} must sum to 1, got {w.sum()!r}")
    return w


@dataclass(frozen=True)
class CoupledEnsemble:
    """Paired fine/coarse particle clouds with per-side normalized weights."""

    fine: np.ndarray
    coarse: np.ndarray
    w_fine: np.ndarray
    w_coarse: np.ndarray
    level: int
    time: int

    def __post_init__(self):
        fine = np.asarray(self.fine, dtype=float)
        coarse = np.asarray(self.coarse, dtype=float)
        if fine.shape != coarse.shape or fine.ndim != 1:
            raise ContractViolation("fine and coarse clouds must be equal-length vectors")
        n = fine.shape[0]
        object.__setattr__(self, "fine", fine)
        object.__setattr__(self, "coarse", coarse)
        object.__setattr__(self, "w_fine", _check_weights(self.w_fine, n, "w_fine"))
        object.__setattr__(self, "w_coarse", _check_weights(self.w_coarse, n, "w_coarse"))

    @property
    def size(self) -> int:
        return self.fine.shape[0]


def _uniform(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n)


def _one_interval(model):
    """View of the model spanning a single observation interval."""
    return replace(model, horizon=model.obs_interval)


def propagate_coupled(model, ensemble: CoupledEnsemble, rng,
                      meter=None) -> CoupledEnsemble:
    """Advance every pair one observation interval; weights reset to uniform."""
    if ensemble.level < 1:
        raise ContractViolation("coupled propagation requires level >= 1")
    gen = check_rng(rng)
    fine, coarse = simulate_coupled_pair(
        _one_interval(model), ensemble.level, ensemble.fine, ensemble.coarse,
        gen, meter=meter,
    )
    n = ensemble.size
    return CoupledEnsemble(fine[..., -1], coarse[..., -1], _uniform(n),
                           _uniform(n), ensemble.level, ensemble.time + 1)


def _normalized_weights(log_lik):
    top = np.max(log_lik)
    if not np.isfinite(top):
        raise WeightCollapse("all particle log-likelihoods are -inf")
    w = np.exp(log_lik - top)
    return w / w.sum()


def weight(ensemble: CoupledEnsemble, y, obs_model) -> CoupledEnsemble:
    """Self-normalized likelihood weights for both sides, via log-sum-exp."""
    w_fine = _normalized_weights(obs_model.log_likelihood(ensemble.fine, y))
    w_coarse = _normalized_weights(obs_model.log_likelihood(ensemble.coarse, y))
    return CoupledEnsemble(ensemble.fine, ensemble.coarse, w_fine, w_coarse,
                           ensemble.level, ensemble.time)


def _residual(w, minimum, mass):
    r = np.clip(w - minimum, 0.0, None)
    total = r.sum()
    if total <= 0:
        raise WeightCollapse("degenerate weights: no residual mass to draw from")
    return r / total


def coupled_resample(ensemble: CoupledEnsemble, rng) -> CoupledEnsemble:
    """Maximal-coupling resampling; returns an equally weighted ensemble.

    Each output slot shares one ancestor index on both sides with
    probability rho = sum_j min(w_fine_j, w_coarse_j) and otherwise draws
    the two indices independently from the normalized residuals.
    """
    gen = check_rng(rng)
    n = ensemble.size
    minimum = np.minimum(ensemble.w_fine, ensemble.w_coarse)
    rho = float(minimum.sum())
    shared = gen.random(n) < rho
    idx_fine = np.empty(n, dtype=int)
    idx_coarse = np.empty(n, dtype=int)
    n_shared = int(shared.sum())
    if n_shared:
        common = gen.choice(n, size=n_shared, p=minimum / rho)
        idx_fine[shared] = common
        idx_coarse[shared] = common
    n_split = n - n_shared
    if n_split:
        idx_fine[~shared] = gen.choice(
            n, size=n_split, p=_residual(ensemble.w_fine, minimum, 1 - rho))
        idx_coarse[~shared] = gen.choice(
            n, size=n_split, p=_residual(ensemble.w_coarse, minimum, 1 - rho))
    return CoupledEnsemble(ensemble.fine[idx_fine], ensemble.coarse[idx_coarse],
                           _uniform(n), _uniform(n), ensemble.level,
                           ensemble.time)


def _ess(w) -> float:
    return float(1.0 / np.sum(w * w))


def _increment(ensemble, phi) -> float:
    return float(ensemble.w_fine @ phi(ensemble.fine)
                 - ensemble.w_coarse @ phi(ensemble.coarse))


@dataclass(frozen=True)
class MlpfLevelTrace:
    """Per-observation-time record of one level's filter run.

    For level 0 the "increment" is the plain bootstrap estimate itself and
    the coarse diagnostics mirror the fine side.
    """

    level: int
    increments: np.ndarray
    ess_fine: np.ndarray
    ess_coarse: np.ndarray
    rho: np.ndarray


@dataclass(frozen=True)
class MlpfResult:
    traces: list
    telescoped: np.ndarray

    @property
    def estimate(self) -> float:
        """Telescoped filter estimate at the final observation time."""
        return float(self.telescoped[-1])


def run_pf(model, obs_model, record, level: int, n: int, phi: Callable,
           rng, meter=None) -> MlpfLevelTrace:
    """Bootstrap particle filter at one level; estimates p^l_k(phi) per k."""
    if n < 2:
        raise ContractViolation("particle filter needs n >= 2 particles")
    gen = check_rng(rng)
    values = np.asarray(record.values, dtype=float)
    x = model.initial_mean + model.initial_std * gen.standard_normal(n)
    estimates, ess, rho = [], [], []
    interval = _one_interval(model)
    for k, y in enumerate(values):
        if k > 0:
            x = simulate_path(interval, level, x, gen, meter=meter)[..., -1]
        try:
            w = _normalized_weights(obs_model.log_likelihood(x, y))
        except WeightCollapse as exc:
            exc.args = (f"{exc.args[0]} (level {level}, k={k})",)
            raise
        estimates.append(float(w @ phi(x)))
        ess.append(_ess(w))
        rho.append(1.0)
        x = x[gen.choice(n, size=n, p=w)]
    arr = np.asarray
    return MlpfLevelTrace(level, arr(estimates), arr(ess), arr(ess), arr(rho))


def _run_coupled_level(model, obs_model, record, level: int, n: int,
                       phi: Callable, gen, meter=None) -> MlpfLevelTrace:
    values = np.asarray(record.values, dtype=float)
    x0 = model.initial_mean + model.initial_std * gen.standard_normal(n)
    ensemble = CoupledEnsemble(x0, x0.copy(), _uniform(n), _uniform(n),
                               level, 0)
    increments, ess_f, ess_c, rhos = [], [], [], []
    for k, y in enumerate(values):
        if k > 0:
            ensemble = propagate_coupled(model, ensemble, gen, meter=meter)
        try:
            ensemble = weight(ensemble, y, obs_model)
        except WeightCollapse as exc:
            exc.args = (f"{exc.args[0]} (level {level}, k={k})",)
            raise
        increments.append(_increment(ensemble, phi))
        ess_f.append(_ess(ensemble.w_fine))
        ess_c.append(_ess(ensemble.w_coarse))
        rhos.append(float(np.minimum(ensemble.w_fine, ensemble.w_coarse).sum()))
        ensemble = coupled_resample(ensemble, gen)
    arr = np.asarray
    return MlpfLevelTrace(level, arr(increments), arr(ess_f), arr(ess_c),
                          arr(rhos))


def run_mlpf(model, obs_model, record, levels, n_per_level, phi: Callable,
             rng, meter=None) -> MlpfResult:
    """Run the multilevel particle filter over the given levels.

    levels must be 0..L contiguous; n_per_level maps each level to its
    ensemble size. The lowest level runs the bootstrap filter, all others
    the coupled pair filter; the telescoped estimate sums them per time.
    """
    levels = sorted(int(l) for l in levels)
    if not levels or levels[0] != 0 or levels != list(range(levels[-1] + 1)):
        raise ContractViolation("levels must be the contiguous range 0..L")
    gen = check_rng(rng)
    traces = []
    for level in levels:
        n = int(n_per_level[level])
        if n < 2:
            raise ContractViolation(f"level {level} needs n >= 2, got {n}")
        if level == 0:
            traces.append(run_pf(model, obs_model, record, 0, n, phi, gen,
                                 meter=meter))
        else:
            traces.append(_run_coupled_level(model, obs_model, record, level,
                                             n, phi, gen, meter=meter))
    telescoped = np.sum([t.increments for t in traces], axis=0)
    return MlpfResult(traces, telescoped)
