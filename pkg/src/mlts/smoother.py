"""Estimator-style wrappers around map fitting and multilevel sampling.

These follow the scikit-learn convention: hyperparameters in __init__,
data-dependent state on fit(X) as trailing-underscore attributes, and
get_params/set_params inherited from BaseEstimator. X is the observation
sequence, either an ObservationRecord or a plain vector of values at the
model's observation times.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .discretization import pair_cost, path_cost
from .errors import ContractViolation
from .models import ObservationRecord, make_model
from .multilevel import (
    allocate,
    n1_from_pilot,
    telescoped_estimate,
)
from .sampling import eval_functional, sample_coupled, sample_single, terminal_state
from .transport import build_level_maps, level_tolerance
from .validation import check_rng

__all__ = ["MultilevelTransportSmoother", "TransportSmoother"]


def _as_record(X, model) -> ObservationRecord:
    if isinstance(X, ObservationRecord):
        record = X
    else:
        values = np.asarray(X, dtype=float).ravel()
        times = tuple(k * model.obs_interval for k in range(values.size))
        record = ObservationRecord(times, tuple(float(v) for v in values))
    if len(record) != model.n_obs + 1:
        raise ContractViolation(
            f"model {model.name} expects {model.n_obs + 1} observations, "
            f"got {len(record)}"
        )
    return record


class TransportSmoother(BaseEstimator):
    """Single-level smoother: fits one chain of pair maps, then samples it.

    Parameters mirror the map-fitting knobs; `tol=None` uses the per-level
    schedule. After fit, `maps_` holds the composition and `sample` pushes
    standard-normal draws through it.
    """

    def __init__(self, model="linear_gaussian", level=3, order=4,
                 quad_order=10, tol=None, max_iter=200):
        self.model = model
        self.level = level
        self.order = order
        self.quad_order = quad_order
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y=None):
        model, obs_model = make_model(self.model)
        record = _as_record(X, model)
        tol = level_tolerance(self.level) if self.tol is None else self.tol
        self.model_ = model
        self.obs_model_ = obs_model
        self.record_ = record
        self.maps_ = build_level_maps(model, obs_model, record, self.level,
                                      order=self.order,
                                      quad_order=self.quad_order, tol=tol,
                                      max_iter=self.max_iter)
        self.n_nodes_ = self.maps_.n_nodes
        return self

    def sample(self, n, random_state=None) -> np.ndarray:
        """Draw n smoothing paths over the level grid, shape (n, n_nodes_)."""
        check_is_fitted(self, "maps_")
        samples, _ = sample_single(self.maps_, n, check_rng(random_state))
        return samples.values

    def estimate(self, functional=None, n=1000, random_state=None) -> float:
        """Monte Carlo estimate of a path functional under the smoother."""
        check_is_fitted(self, "maps_")
        phi = terminal_state() if functional is None else functional
        _, (value,) = sample_single(self.maps_, n, check_rng(random_state),
                                    functionals=[phi])
        return value


class MultilevelTransportSmoother(BaseEstimator):
    """Multilevel smoother: map chains for levels 0..max_level, telescoped.

    `n1=None` sizes the coupled levels from a pilot run of coupled pairs at
    level 1 against level-0 singles; deeper levels decay geometrically with
    exponents (beta, zeta).
    """

    def __init__(self, model="linear_gaussian", max_level=4, order=4,
                 quad_order=10, tol=None, max_iter=200, n0=16_000, n1=None,
                 pilot_size=10_000, beta=2.0, zeta=1.0):
        self.model = model
        self.max_level = max_level
        self.order = order
        self.quad_order = quad_order
        self.tol = tol
        self.max_iter = max_iter
        self.n0 = n0
        self.n1 = n1
        self.pilot_size = pilot_size
        self.beta = beta
        self.zeta = zeta

    def fit(self, X, y=None):
        if self.max_level < 1:
            raise ContractViolation("max_level must be >= 1")
        model, obs_model = make_model(self.model)
        record = _as_record(X, model)
        self.model_ = model
        self.obs_model_ = obs_model
        self.record_ = record
        self.maps_ = {}
        for level in range(self.max_level + 1):
            tol = level_tolerance(level) if self.tol is None else self.tol
            self.maps_[level] = build_level_maps(
                model, obs_model, record, level, order=self.order,
                quad_order=self.quad_order, tol=tol, max_iter=self.max_iter)
        return self

    def _pilot_n1(self, phi, rng) -> int:
        pair = sample_coupled(self.maps_[1], self.maps_[0], self.pilot_size,
                              rng)
        inc = (eval_functional(phi, pair.fine)
               - eval_functional(phi, pair.coarse))
        base, _ = sample_single(self.maps_[0], self.pilot_size, rng)
        base_phi = eval_functional(phi, base)
        n_obs = len(self.record_) - 1
        return n1_from_pilot(self.n0, float(np.var(base_phi, ddof=1)),
                             float(np.var(inc, ddof=1)),
                             cost0=path_cost(0, n_obs),
                             cost1=pair_cost(1, n_obs))

    def estimate(self, functional=None, random_state=None):
        """Telescoped multilevel estimate of a path functional."""
        check_is_fitted(self, "maps_")
        phi = terminal_state() if functional is None else functional
        rng = check_rng(random_state)
        n1 = self._pilot_n1(phi, rng) if self.n1 is None else int(self.n1)
        counts = allocate(n1, self.beta, self.zeta, self.max_level)
        n_obs = len(self.record_) - 1
        base, _ = sample_single(self.maps_[0], self.n0, rng)
        level0 = eval_functional(phi, base)
        increments = []
        costs = [self.n0 * path_cost(0, n_obs)]
        for level in range(1, self.max_level + 1):
            n = counts[level - 1]
            pair = sample_coupled(self.maps_[level], self.maps_[level - 1],
                                  n, rng)
            increments.append(eval_functional(phi, pair.fine)
                              - eval_functional(phi, pair.coarse))
            costs.append(n * pair_cost(level, n_obs))
        return telescoped_estimate(level0, increments, costs)

    def sample(self, n, random_state=None) -> np.ndarray:
        """Draw n paths from the finest-level smoother."""
        check_is_fitted(self, "maps_")
        samples, _ = sample_single(self.maps_[self.max_level], n,
                                   check_rng(random_state))
        return samples.values
