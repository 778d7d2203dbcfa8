"""Single-level and coupled smoothing samplers built on fitted map chains.

A smoothing sample at level l is a path over the level grid, obtained by
pushing an i.i.d. standard-normal base vector through the backward map
composition. Coupled pairs reuse one fine base draw: the fine path pushes
the full vector, the coarse path pushes its even-indexed thinning, so the
two marginals are the exact level-l and level-(l-1) smoothing laws.

Functionals of the path are evaluated on observation-time coordinates
only, which extends a function of the observation skeleton to the full
grid without materializing the extension.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ContractViolation
from .transport import MapComposition, apply_composition
from .validation import check_rng

__all__ = [
    "CoupledSamplePair",
    "Functional",
    "SmoothingSample",
    "custom",
    "discounted_sum",
    "eval_functional",
    "observation_values",
    "sample_coupled",
    "sample_single",
    "terminal_state",
    "thin_base",
]


@dataclass(frozen=True)
class SmoothingSample:
    """Path values over a level grid; leading axes of `values` are batch axes."""

    level: int
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if (values.shape[-1] - 1) % 2**self.level != 0:
            raise ContractViolation(
                f"{values.shape[-1]} grid values do not fit a level-{self.level} grid"
            )

    @property
    def n_obs(self) -> int:
        return (self.values.shape[-1] - 1) // 2**self.level


@dataclass(frozen=True)
class CoupledSamplePair:
    """Fine and coarse samples driven by one base draw and its thinning."""

    fine: SmoothingSample
    coarse: SmoothingSample
    shared_seed: Optional[int] = None

    def __post_init__(self):
        if self.fine.level != self.coarse.level + 1:
            raise ContractViolation(
                f"fine level {self.fine.level} must be one above "
                f"coarse level {self.coarse.level}"
            )
        if self.fine.n_obs != self.coarse.n_obs:
            raise ContractViolation("fine and coarse grids cover different spans")


@dataclass(frozen=True)
class Functional:
    """Function of the path read off the observation-time coordinates.

    kind is one of "terminal_state", "discounted_sum" (needs kappa) or
    "custom" (needs an evaluator taking the observation-time values with
    any batch axes in front and returning one value per path).
    """

    kind: str
    kappa: Optional[float] = None
    evaluator: Optional[Callable] = None

    def __post_init__(self):
        if self.kind not in ("terminal_state", "discounted_sum", "custom"):
            raise ContractViolation(f"unknown functional kind {self.kind!r}")
        if self.kind == "discounted_sum" and self.kappa is None:
            raise ContractViolation("discounted_sum needs a forgetting rate kappa")
        if self.kind == "custom" and self.evaluator is None:
            raise ContractViolation("custom functional needs an evaluator")


def terminal_state() -> Functional:
    """Value of the path at the final observation time."""
    return Functional("terminal_state")


def discounted_sum(kappa: float = 2.0) -> Functional:
    """Sum of observation-time values weighted by e^{-kappa (T - t)}."""
    return Functional("discounted_sum", kappa=float(kappa))


def custom(evaluator: Callable) -> Functional:
    return Functional("custom", evaluator=evaluator)


def observation_values(sample: SmoothingSample) -> np.ndarray:
    """Coordinates of the sample at observation times 0, 1, ..., T."""
    return sample.values[..., :: 2**sample.level]


def eval_functional(functional: Functional, sample: SmoothingSample,
                    obs_interval: float = 1.0):
    """Evaluate the functional; scalar for one path, array for a batch."""
    obs = observation_values(sample)
    if functional.kind == "terminal_state":
        out = obs[..., -1]
    elif functional.kind == "discounted_sum":
        k = np.arange(obs.shape[-1])
        weights = np.exp(-functional.kappa * obs_interval * (k[-1] - k))
        out = obs @ weights
    else:
        out = np.asarray(functional.evaluator(obs), dtype=float)
    return float(out) if sample.values.ndim == 1 else out


def thin_base(z) -> np.ndarray:
    """Keep the even-indexed coordinates of a fine base draw.

    Maps a level-l base vector (last axis of odd length 2m+1, endpoints
    included) onto the level-(l-1) grid of m+1 coordinates.
    """
    z = np.asarray(z, dtype=float)
    n = z.shape[-1]
    if n < 3 or n % 2 == 0:
        raise ContractViolation(
            f"fine base draw needs an odd number >= 3 of coordinates, got {n}"
        )
    return z[..., ::2]


def sample_single(maps: MapComposition, n: int, rng, functionals=()):
    """Draw n smoothing samples and average each functional over them.

    rng may be a Generator or an int seed. Returns (samples, estimates)
    where samples.values has shape (n, grid length) and estimates is one
    empirical mean per entry of functionals.
    """
    if n < 1:
        raise ContractViolation(f"sample count must be >= 1, got {n}")
    gen = check_rng(rng)
    z = gen.standard_normal((n, maps.n_nodes))
    samples = SmoothingSample(maps.level, apply_composition(maps, z))
    estimates = [
        float(np.mean(eval_functional(phi, samples, maps.obs_interval)))
        for phi in functionals
    ]
    return samples, estimates


def sample_coupled(maps_fine: MapComposition, maps_coarse: MapComposition,
                   n: int, rng) -> CoupledSamplePair:
    """Draw n coupled sample pairs from one fine base draw per pair.

    The coarse path is driven by the even-indexed thinning of the fine
    base vector, so each marginal is the corresponding single-level law.
    """
    if maps_fine.level != maps_coarse.level + 1:
        raise ContractViolation(
            f"fine level {maps_fine.level} must be one above "
            f"coarse level {maps_coarse.level}"
        )
    if maps_fine.n_obs != maps_coarse.n_obs:
        raise ContractViolation("map chains cover different observation spans")
    if n < 1:
        raise ContractViolation(f"sample count must be >= 1, got {n}")
    shared_seed = int(rng) if isinstance(rng, (int, np.integer)) else None
    gen = check_rng(rng)
    z = gen.standard_normal((n, maps_fine.n_nodes))
    fine = SmoothingSample(maps_fine.level, apply_composition(maps_fine, z))
    coarse = SmoothingSample(maps_coarse.level,
                             apply_composition(maps_coarse, thin_base(z)))
    return CoupledSamplePair(fine, coarse, shared_seed)
