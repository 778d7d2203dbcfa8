"""SDE benchmark models and observation likelihoods.

Three one-dimensional benchmark instances are provided:

* linear-Gaussian: dX = a X dt + b dW with Gaussian observations, the only
  model with an exact (Kalman) oracle;
* Langevin: drift is half the score of a Student-t stationary density, with
  log-variance observations;
* nonlinear diffusion: mean-reverting drift with state-dependent diffusion
  and observations every half time unit.

All likelihoods are stored and evaluated in log-space; products over many
observation times underflow quickly otherwise. Drift/diffusion callables are
vectorized over numpy arrays, and each factory also supplies the analytic
x-derivatives used by the transport-map objective.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .errors import ContractViolation, UnsupportedModel
from .validation import stream_rng

__all__ = [
    "SdeModel",
    "ObservationModel",
    "ObservationRecord",
    "make_linear_gaussian",
    "make_langevin",
    "make_nonlinear_diffusion",
    "make_model",
    "simulate_truth",
    "REFERENCE_LEVEL",
    "MODEL_NAMES",
]

# Reference ("truth") simulations run two levels above the deepest experiment level.
REFERENCE_LEVEL = 10

MODEL_NAMES = ("linear_gaussian", "langevin", "nonlinear_diffusion")


@dataclass(frozen=True)
class SdeModel:
    """Continuous-time problem definition dX_t = a(X_t) dt + b(X_t) dW_t.

    The initial law is N(initial_mean, initial_std^2); initial_std = 0 encodes
    a point mass. `horizon` is the final time in real units and observations
    arrive every `obs_interval` time units, so internally one "unit" of
    rescaled time is one observation interval (n_obs intervals in total).
    """

    name: str
    dim: int
    drift: Callable[[np.ndarray], np.ndarray]
    diffusion: Callable[[np.ndarray], np.ndarray]
    initial_mean: float
    initial_std: float
    horizon: float
    obs_interval: float = 1.0
    drift_prime: Optional[Callable[[np.ndarray], np.ndarray]] = None
    diffusion_prime: Optional[Callable[[np.ndarray], np.ndarray]] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.obs_interval <= 0 or self.horizon <= 0:
            raise ContractViolation("horizon and obs_interval must be positive")
        ratio = self.horizon / self.obs_interval
        if abs(ratio - round(ratio)) > 1e-9:
            raise ContractViolation(
                f"horizon {self.horizon} is not a whole number of observation intervals"
            )

    @property
    def n_obs(self) -> int:
        """Number of observation intervals (observations at k=0..n_obs)."""
        return int(round(self.horizon / self.obs_interval))

    def initial_logpdf(self, x):
        if self.initial_std <= 0:
            raise UnsupportedModel("point-mass initial law has no density")
        z = (np.asarray(x, dtype=float) - self.initial_mean) / self.initial_std
        return -0.5 * z**2 - math.log(self.initial_std) - 0.5 * math.log(2.0 * math.pi)

    def initial_dlogpdf(self, x):
        if self.initial_std <= 0:
            raise UnsupportedModel("point-mass initial law has no density")
        return -(np.asarray(x, dtype=float) - self.initial_mean) / self.initial_std**2


@dataclass(frozen=True)
class ObservationModel:
    """Observation channel y_k ~ l(x_k, .), stored in log-space."""

    obs_dim: int
    log_likelihood: Callable[[np.ndarray, np.ndarray], np.ndarray]
    sampler: Callable[[np.ndarray, np.random.Generator], np.ndarray]
    log_likelihood_dx: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None


@dataclass(frozen=True)
class ObservationRecord:
    """Observed values at ascending times within [0, horizon]."""

    times: tuple
    values: tuple

    def __post_init__(self):
        if len(self.times) != len(self.values):
            raise ContractViolation("times and values must have equal length")
        if any(t1 >= t2 for t1, t2 in zip(self.times, self.times[1:])):
            raise ContractViolation("observation times must be strictly ascending")

    def __len__(self) -> int:
        return len(self.times)

    def value_at_index(self, k: int) -> float:
        return float(self.values[k])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["time", "value"])
            for t, v in zip(self.times, self.values):
                writer.writerow([format(float(t), ".17g"), format(float(v), ".17g")])

    @staticmethod
    def from_csv(path) -> "ObservationRecord":
        times, values = [], []
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [h.strip() for h in header] != ["time", "value"]:
                raise ContractViolation(f"{path}: expected header time,value")
            for row in reader:
                times.append(float(row[0]))
                values.append(float(row[1]))
        return ObservationRecord(tuple(times), tuple(values))


def _gaussian_loglik(y, mean, var):
    y = np.asarray(y, dtype=float)
    return -0.5 * (y - mean) ** 2 / var - 0.5 * np.log(2.0 * math.pi * var)


def make_linear_gaussian() -> tuple[SdeModel, ObservationModel]:
    """Linear SDE dX = -0.1 X dt + dW, observations y ~ N(x, 0.25^2), T = 4."""
    a, b, tau = -0.1, 1.0, 0.25

    model = SdeModel(
        name="linear_gaussian",
        dim=1,
        drift=lambda x: a * np.asarray(x, dtype=float),
        diffusion=lambda x: np.ones_like(np.asarray(x, dtype=float)) * b,
        drift_prime=lambda x: np.full_like(np.asarray(x, dtype=float), a),
        diffusion_prime=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        initial_mean=0.0,
        initial_std=1.0,
        horizon=4.0,
        obs_interval=1.0,
        params={"a": a, "b": b, "tau": tau},
    )
    obs_model = ObservationModel(
        obs_dim=1,
        log_likelihood=lambda x, y: _gaussian_loglik(y, np.asarray(x, dtype=float), tau**2),
        log_likelihood_dx=lambda x, y: (np.asarray(y, dtype=float) - np.asarray(x, dtype=float))
        / tau**2,
        sampler=lambda x, rng: float(x) + tau * rng.standard_normal(),
    )
    return model, obs_model


def make_langevin() -> tuple[SdeModel, ObservationModel]:
    """Langevin SDE with Student-t(nu=10) stationary law; y ~ N(0, exp(x)), T = 4.

    The drift is half the score of the Student-t density,
    a(x) = -(nu+1) x / (2 (nu + x^2)), globally bounded by (nu+1)/(4 sqrt(nu)).
    """
    nu, tau = 10.0, 1.0

    def drift(x):
        x = np.asarray(x, dtype=float)
        return -(nu + 1.0) * x / (2.0 * (nu + x**2))

    def drift_prime(x):
        x = np.asarray(x, dtype=float)
        return -(nu + 1.0) * (nu - x**2) / (2.0 * (nu + x**2) ** 2)

    def loglik(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        # N(y; 0, tau^2 exp(x)) in log-space
        return -0.5 * y**2 * np.exp(-x) / tau**2 - 0.5 * (x + np.log(2.0 * math.pi * tau**2))

    def loglik_dx(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return 0.5 * y**2 * np.exp(-x) / tau**2 - 0.5

    model = SdeModel(
        name="langevin",
        dim=1,
        drift=drift,
        diffusion=lambda x: np.ones_like(np.asarray(x, dtype=float)),
        drift_prime=drift_prime,
        diffusion_prime=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        initial_mean=0.0,
        initial_std=1.0,
        horizon=4.0,
        obs_interval=1.0,
        params={"nu": nu, "tau": tau},
    )
    obs_model = ObservationModel(
        obs_dim=1,
        log_likelihood=loglik,
        log_likelihood_dx=loglik_dx,
        sampler=lambda x, rng: tau * math.exp(0.5 * float(x)) * rng.standard_normal(),
    )
    return model, obs_model


def make_nonlinear_diffusion() -> tuple[SdeModel, ObservationModel]:
    """Mean-reverting drift theta (mu - x), diffusion 1/sqrt(1+x^2); T = 2, obs every 0.5."""
    theta, mu, sig, tau = 1.0, 1.0, 1.0, 1.0

    def diffusion(x):
        x = np.asarray(x, dtype=float)
        return sig / np.sqrt(1.0 + x**2)

    def diffusion_prime(x):
        x = np.asarray(x, dtype=float)
        return -sig * x * (1.0 + x**2) ** -1.5

    model = SdeModel(
        name="nonlinear_diffusion",
        dim=1,
        drift=lambda x: theta * (mu - np.asarray(x, dtype=float)),
        diffusion=diffusion,
        drift_prime=lambda x: np.full_like(np.asarray(x, dtype=float), -theta),
        diffusion_prime=diffusion_prime,
        initial_mean=0.0,
        initial_std=1.0,
        horizon=2.0,
        obs_interval=0.5,
        params={"theta": theta, "mu": mu, "sigma": sig, "tau": tau},
    )
    obs_model = ObservationModel(
        obs_dim=1,
        log_likelihood=lambda x, y: _gaussian_loglik(y, np.asarray(x, dtype=float), tau**2),
        log_likelihood_dx=lambda x, y: (np.asarray(y, dtype=float) - np.asarray(x, dtype=float))
        / tau**2,
        sampler=lambda x, rng: float(x) + tau * rng.standard_normal(),
    )
    return model, obs_model


_FACTORIES = {
    "linear_gaussian": make_linear_gaussian,
    "langevin": make_langevin,
    "nonlinear_diffusion": make_nonlinear_diffusion,
}


def make_model(name: str) -> tuple[SdeModel, ObservationModel]:
    """Look up a benchmark model by its config name."""
    try:
        factory = _FACTORIES[name]
    except KeyError:
        raise UnsupportedModel(
            f"unknown model {name!r}; expected one of {sorted(_FACTORIES)}"
        ) from None
    return factory()


def simulate_truth(model: SdeModel, obs_model: ObservationModel, seed: int,
                   level: int = REFERENCE_LEVEL):
    """Simulate a reference path and synthetic observations.

    The path is simulated at a fine reference level (default level 10) and
    observations are drawn at times 0, obs_interval, ..., horizon. Pure
    function of (model, obs_model, seed, level).

    Returns:
        (path, ObservationRecord): path over the reference grid and the drawn
        observations at real times.
    """
    from .discretization import simulate_path

    rng = stream_rng(seed)
    x0 = model.initial_mean + model.initial_std * rng.standard_normal()
    path = simulate_path(model, level, x0, rng)
    steps_per_obs = 2**level
    times = []
    values = []
    for k in range(model.n_obs + 1):
        x_k = path[k * steps_per_obs]
        times.append(k * model.obs_interval)
        values.append(float(obs_model.sampler(x_k, rng)))
    return path, ObservationRecord(tuple(times), tuple(values))


def zero_diffusion(model: SdeModel) -> SdeModel:
    """Copy of `model` with the noise switched off (deterministic Euler flow)."""
    return replace(
        model,
        diffusion=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        diffusion_prime=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
    )
