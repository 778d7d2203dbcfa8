"""Small input-validation helpers used by the public API surfaces."""

from __future__ import annotations

import numpy as np

from .errors import ContractViolation


def check_rng(random_state) -> np.random.Generator:
    """Coerce None, an integer seed, or a Generator into a Generator."""
    if random_state is None:
        return np.random.default_rng()
    if isinstance(random_state, np.random.Generator):
        return random_state
    if isinstance(random_state, (int, np.integer)):
        return np.random.default_rng(int(random_state))
    raise ContractViolation(
        f"random_state must be None, an int seed, or a numpy Generator, got {random_state!r}"
    )


def stream_rng(seed: int, *key: int) -> np.random.Generator:
    """Counter-based stream: one Generator per (seed, *key) tuple.

    Used to hand out independent, reproducible streams per (experiment seed,
    level, path/batch index) without sharing mutable RNG state.
    """
    return np.random.default_rng(np.random.SeedSequence((int(seed),) + tuple(int(k) for k in key)))


def as_float_array(x, name: str = "array", ndim: int | None = None) -> np.ndarray:
    """Convert to a float ndarray, rejecting non-finite entries."""
    arr = np.asarray(x, dtype=float)
    if ndim is not None and arr.ndim != ndim:
        raise ContractViolation(f"{name} must have ndim={ndim}, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ContractViolation(f"{name} contains non-finite entries")
    return arr


def require_positive(value, name: str):
    if not value > 0:
        raise ContractViolation(f"{name} must be positive, got {value!r}")
    return value
