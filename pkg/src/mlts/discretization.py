"""Euler-Maruyama discretization at dyadic levels and coupled fine/coarse paths.

Level l uses step h_l = 2^-l in rescaled time where one unit is one
observation interval, i.e. M_l = 2^l Euler steps between observations. Real
time enters only through the model's obs_interval: the physical step is
h_l * obs_interval.

The fine/coarse coupling sums adjacent fine noises: a coarse step driven by
sqrt(h_l) * (u_t + u_{t+h_l}) has exactly the level-(l-1) Brownian increment
variance h_{l-1}, so the coarse marginal equals an independent level-(l-1)
simulation.

Cost accounting is in Euler steps (one unit per step), never wall time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, NumericalError

__all__ = [
    "LevelGrid",
    "CostMeter",
    "euler_step",
    "kernel_logpdf",
    "kernel_logpdf_grad",
    "simulate_path",
    "simulate_coupled_pair",
    "euler_path_from_noises",
    "coarse_path_from_fine_noises",
    "path_cost",
    "pair_cost",
]


@dataclass(frozen=True)
class LevelGrid:
    """Dyadic time grid for one discretization level.

    Attributes:
        level: discretization level l >= 0.
        n_obs: number of observation intervals covered by the grid.
        obs_interval: real-time length of one observation interval.
    """

    level: int
    n_obs: int
    obs_interval: float = 1.0

    def __post_init__(self):
        if self.level < 0:
            raise ContractViolation(f"level must be >= 0, got {self.level}")
        if self.n_obs < 1:
            raise ContractViolation(f"n_obs must be >= 1, got {self.n_obs}")

    @property
    def step(self) -> float:
        """h_l = 2^-l in rescaled (unit-interval) time."""
        return 2.0**-self.level

    @property
    def steps_per_obs(self) -> int:
        """M_l = 2^l Euler steps per observation interval."""
        return 2**self.level

    @property
    def n_steps(self) -> int:
        return self.steps_per_obs * self.n_obs

    @property
    def n_nodes(self) -> int:
        return self.n_steps + 1

    @property
    def dt(self) -> float:
        """Physical Euler step h_l * obs_interval."""
        return self.step * self.obs_interval

    @property
    def times(self) -> np.ndarray:
        """Grid times in rescaled units: 0, h_l, ..., n_obs."""
        return np.arange(self.n_nodes) * self.step

    @property
    def real_times(self) -> np.ndarray:
        return self.times * self.obs_interval

    def obs_node_indices(self) -> np.ndarray:
        """Grid node indices of observation times 0..n_obs."""
        return np.arange(self.n_obs + 1) * self.steps_per_obs


@dataclass
class CostMeter:
    """Accumulates Euler-step cost units."""

    euler_steps: int = 0

    def add(self, n: int) -> None:
        self.euler_steps += int(n)

    def merge(self, other: "CostMeter") -> None:
        self.euler_steps += other.euler_steps


def path_cost(level: int, n_obs: int) -> int:
    """Euler-step cost of one single-level path."""
    return 2**level * n_obs


def pair_cost(level: int, n_obs: int) -> int:
    """Euler-step cost of one coupled (fine, coarse) pair."""
    return (2**level + 2 ** (level - 1)) * n_obs


def euler_step(model, x, h, u):
    """One Euler-Maruyama step x + h a(x) + sqrt(h) b(x) u with physical step h."""
    if not h > 0:
        raise ContractViolation(f"step size must be positive, got {h}")
    x = np.asarray(x, dtype=float)
    out = x + h * model.drift(x) + math.sqrt(h) * model.diffusion(x) * np.asarray(u, dtype=float)
    if not np.all(np.isfinite(out)):
        raise NumericalError("euler_step produced non-finite state")
    return out


def kernel_logpdf(model, level, x, x_next):
    """Log-density of the one-step Euler transition K^l(x, x_next).

    Gaussian with mean x + dt a(x) and variance dt b(x)^2, where
    dt = 2^-level * obs_interval.
    """
    dt = 2.0**-level * model.obs_interval
    x = np.asarray(x, dtype=float)
    x_next = np.asarray(x_next, dtype=float)
    var = dt * model.diffusion(x) ** 2
    if np.any(var <= 0):
        raise NumericalError("singular transition covariance (diffusion vanished)")
    resid = x_next - x - dt * model.drift(x)
    return -0.5 * resid**2 / var - 0.5 * np.log(2.0 * math.pi * var)


def _derivative(fn, fn_prime, x, eps=1e-6):
    # Analytic derivative when the model provides one, else central differences.
    if fn_prime is not None:
        return fn_prime(x)
    return (fn(x + eps) - fn(x - eps)) / (2.0 * eps)


def kernel_logpdf_grad(model, level, x, x_next):
    """Gradient of kernel_logpdf w.r.t. both arguments, returned as (d/dx, d/dx_next)."""
    dt = 2.0**-level * model.obs_interval
    x = np.asarray(x, dtype=float)
    x_next = np.asarray(x_next, dtype=float)
    b = model.diffusion(x)
    var = dt * b**2
    if np.any(var <= 0):
        raise NumericalError("singular transition covariance (diffusion vanished)")
    resid = x_next - x - dt * model.drift(x)
    a_p = _derivative(model.drift, model.drift_prime, x)
    b_p = _derivative(model.diffusion, model.diffusion_prime, x)
    d_next = -resid / var
    d_x = resid * (1.0 + dt * a_p) / var + (b_p / b) * (resid**2 / var - 1.0)
    return d_x, d_next


def euler_path_from_noises(model, level, x0, noises):
    """Drive a level-l Euler path with pre-drawn standard normal noises.

    Args:
        x0: scalar or (n,) array of starting states.
        noises: (..., n_steps) array matching x0's leading shape.

    Returns:
        (..., n_steps+1) array of states over the grid.
    """
    x0 = np.asarray(x0, dtype=float)
    noises = np.asarray(noises, dtype=float)
    n_steps = noises.shape[-1]
    dt = 2.0**-level * model.obs_interval
    sq = math.sqrt(dt)
    path = np.empty(x0.shape + (n_steps + 1,), dtype=float)
    path[..., 0] = x0
    x = x0
    for j in range(n_steps):
        x = x + dt * model.drift(x) + sq * model.diffusion(x) * noises[..., j]
        path[..., j + 1] = x
    if not np.all(np.isfinite(path)):
        raise NumericalError(f"non-finite state in level-{level} Euler path")
    return path


def coarse_path_from_fine_noises(model, level, x0, noises):
    """Level-(l-1) path driven by pair-summed level-l noises.

    Each coarse step uses sqrt(h_l) * (u_{2j} + u_{2j+1}), whose variance is
    h_{l-1}: the coarse marginal is exactly the level-(l-1) Euler law.
    """
    if level < 1:
        raise ContractViolation("coupled coarse path requires level >= 1")
    noises = np.asarray(noises, dtype=float)
    if noises.shape[-1] % 2:
        raise ContractViolation("fine noise count must be even to pair-sum")
    summed = noises[..., 0::2] + noises[..., 1::2]
    x0 = np.asarray(x0, dtype=float)
    dt_fine = 2.0**-level * model.obs_interval
    dt_coarse = 2.0 * dt_fine
    sq_fine = math.sqrt(dt_fine)
    n_steps = summed.shape[-1]
    path = np.empty(x0.shape + (n_steps + 1,), dtype=float)
    path[..., 0] = x0
    x = x0
    for j in range(n_steps):
        x = x + dt_coarse * model.drift(x) + sq_fine * model.diffusion(x) * summed[..., j]
        path[..., j + 1] = x
    if not np.all(np.isfinite(path)):
        raise NumericalError(f"non-finite state in coupled level-{level - 1} path")
    return path


def simulate_path(model, level, x0, rng, meter=None):
    """Simulate a level-l Euler path over the full horizon.

    x0 may be a scalar (one path) or an (n,) array (n independent paths, one
    noise column per step). Records n * M_l * n_obs Euler steps on `meter`.
    """
    grid = LevelGrid(level, model.n_obs, model.obs_interval)
    x0 = np.asarray(x0, dtype=float)
    noises = rng.standard_normal(x0.shape + (grid.n_steps,))
    path = euler_path_from_noises(model, level, x0, noises)
    if meter is not None:
        meter.add(max(1, int(np.prod(x0.shape))) * grid.n_steps)
    return path


def simulate_coupled_pair(model, level, x0_fine, x0_coarse, rng, meter=None):
    """Simulate a coupled (level l, level l-1) path pair from shared noises.

    The fine path consumes fresh standard normals; the coarse path consumes
    their pairwise sums as described in the module docstring. Marginally each
    path follows its own single-level law.
    """
    if level < 1:
        raise ContractViolation("simulate_coupled_pair requires level >= 1")
    grid = LevelGrid(level, model.n_obs, model.obs_interval)
    x0_fine = np.asarray(x0_fine, dtype=float)
    noises = rng.standard_normal(x0_fine.shape + (grid.n_steps,))
    fine = euler_path_from_noises(model, level, x0_fine, noises)
    coarse = coarse_path_from_fine_noises(model, level, x0_coarse, noises)
    if meter is not None:
        n_paths = max(1, int(np.prod(x0_fine.shape)))
        meter.add(n_paths * (grid.n_steps + grid.n_steps // 2))
    return fine, coarse
