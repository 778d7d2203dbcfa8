"""Telescoping multilevel estimator, sample allocation and MSE bookkeeping.

The estimator combines a plain Monte Carlo mean at level 0 with coupled
increment means at levels 1..L. Sample sizes decay geometrically from N_1
according to the variance and cost exponents (beta, zeta); N_0 is chosen
separately. Cost is counted in Euler steps throughout, never wall time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation

__all__ = [
    "LevelStats",
    "MultilevelEstimate",
    "allocate",
    "choose_L",
    "mse_decompose",
    "n1_from_pilot",
    "rate_fit",
    "telescoped_estimate",
]


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass
class LevelStats:
    """Streaming first/second moments of one level's increment values.

    Accumulators are associative, so partial stats from parallel workers
    merge into the same totals as a single pass.
    """

    level: int
    n_samples: int = 0
    sum: float = 0.0
    sum_sq: float = 0.0
    cost_units: int = 0

    @classmethod
    def from_values(cls, level: int, values, cost_units: int = 0) -> "LevelStats":
        values = np.asarray(values, dtype=float)
        if values.ndim != 1 or values.size == 0:
            raise ContractViolation(f"level {level} needs a non-empty value vector")
        return cls(level, values.size, float(values.sum()),
                   float(values @ values), int(cost_units))

    def add(self, values, cost_units: int = 0) -> None:
        values = np.asarray(values, dtype=float)
        self.n_samples += values.size
        self.sum += float(values.sum())
        self.sum_sq += float(values @ values)
        self.cost_units += int(cost_units)

    def merge(self, other: "LevelStats") -> None:
        if other.level != self.level:
            raise ContractViolation("cannot merge stats from different levels")
        self.n_samples += other.n_samples
        self.sum += other.sum
        self.sum_sq += other.sum_sq
        self.cost_units += other.cost_units

    @property
    def mean(self) -> float:
        if self.n_samples == 0:
            raise ContractViolation(f"level {self.level} holds no samples")
        return self.sum / self.n_samples

    @property
    def variance_estimate(self) -> float:
        """Unbiased sample variance; needs at least two samples."""
        if self.n_samples < 2:
            raise ContractViolation(
                f"level {self.level} needs >= 2 samples for a variance"
            )
        n = self.n_samples
        var = (self.sum_sq - self.sum**2 / n) / (n - 1)
        return max(var, 0.0)


@dataclass(frozen=True)
class MultilevelEstimate:
    """Telescoped estimate with its variance and cost decomposition."""

    per_level: list
    value: float
    total_variance: float
    total_cost: int
    bias_proxy: float

    @property
    def levels(self) -> int:
        return self.per_level[-1].level


def allocate(n1: int, beta: float, zeta: float, L: int) -> list[int]:
    """Sample counts N_l = N_1 2^{-(beta+zeta)(l-1)/2} for l = 1..L.

    Rounded half up with floor 1, so the deepest levels always get work.
    """
    if n1 < 1:
        raise ContractViolation(f"N_1 must be >= 1, got {n1}")
    if L < 1:
        raise ContractViolation(f"L must be >= 1, got {L}")
    rate = (beta + zeta) / 2.0
    return [max(1, _round_half_up(n1 * 2.0 ** (-rate * (l - 1))))
            for l in range(1, L + 1)]


def choose_L(alpha: float, epsilon: float) -> int:
    """Smallest L with bias O(h_L^alpha) at target epsilon: ceil(-log2(eps)/alpha)."""
    if not 0 < epsilon < 1:
        raise ContractViolation(f"epsilon must lie in (0, 1), got {epsilon}")
    if alpha < 1:
        raise ContractViolation(f"alpha must be >= 1, got {alpha}")
    return max(1, math.ceil(-math.log2(epsilon) / alpha))


def n1_from_pilot(n0: int, var0: float, var1: float,
                  cost0: float = 1.0, cost1: float = 3.0) -> int:
    """Top coupled-level size from pilot variances at levels 0 and 1.

    Uses the optimal-allocation ratio N_1/N_0 = sqrt((V_1/C_1)/(V_0/C_0))
    with per-sample Euler costs, seeded by a pilot run at both levels.
    """
    if min(var0, var1) <= 0 or min(cost0, cost1) <= 0:
        raise ContractViolation("pilot variances and costs must be positive")
    ratio = math.sqrt((var1 / cost1) / (var0 / cost0))
    return max(1, _round_half_up(n0 * ratio))


def telescoped_estimate(level0_values, increment_values=(),
                        costs=None) -> MultilevelEstimate:
    """Combine level-0 values and per-level increment values.

    level0_values holds phi evaluated on single-level samples; the i-th
    entry of increment_values holds phi(fine) - phi(coarse) for level i+1.
    costs, when given, lists Euler-step totals for levels 0..L.
    """
    arrays = [np.asarray(level0_values, dtype=float)]
    arrays += [np.asarray(v, dtype=float) for v in increment_values]
    if costs is None:
        costs = [0] * len(arrays)
    if len(costs) != len(arrays):
        raise ContractViolation("need one cost entry per level 0..L")
    per_level = [LevelStats.from_values(l, v, c)
                 for l, (v, c) in enumerate(zip(arrays, costs))]
    value = sum(s.mean for s in per_level)
    total_variance = sum(s.variance_estimate / s.n_samples for s in per_level)
    total_cost = sum(s.cost_units for s in per_level)
    bias_proxy = abs(per_level[-1].mean) if len(per_level) > 1 else float("nan")
    return MultilevelEstimate(per_level, float(value), float(total_variance),
                              int(total_cost), float(bias_proxy))


def rate_fit(h, values) -> tuple[float, float, float]:
    """Least-squares slope, intercept and R^2 of log2(values) on log2(h)."""
    h = np.asarray(h, dtype=float)
    values = np.asarray(values, dtype=float)
    if h.shape != values.shape or h.ndim != 1:
        raise ContractViolation("h and values must be equal-length vectors")
    if h.size < 3:
        raise ContractViolation("rate fit needs at least 3 levels")
    if np.any(h <= 0) or np.any(values <= 0):
        raise ContractViolation("rate fit needs positive step sizes and values")
    x = np.log2(h)
    y = np.log2(values)
    slope, intercept = np.polyfit(x, y, 1)
    residuals = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - float(np.sum(residuals**2)) / ss_tot
    return float(slope), float(intercept), r2


def mse_decompose(estimates, oracle_value: float) -> tuple[float, float, float]:
    """Split replicate estimates into variance and squared-bias terms.

    Returns (variance, bias^2, their sum); a single estimate counts as
    zero-variance.
    """
    estimates = np.atleast_1d(np.asarray(estimates, dtype=float))
    variance = float(np.var(estimates, ddof=1)) if estimates.size > 1 else 0.0
    bias_sq = float((estimates.mean() - oracle_value) ** 2)
    return variance, bias_sq, variance + bias_sq
