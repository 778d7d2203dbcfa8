"""Unnormalized pair targets coupled by the fitted maps.

Each target is the joint log-density of two adjacent grid slots (t, t+h).
For t > 0 the slot-t coordinate lives in base space and is tied to the
state through the upstream filter component; the slot-(t+h) coordinate is
state-valued. At t = 0 both coordinates are state-valued and the initial
law replaces the base factor. Observation factors enter whenever t+h (and
at t = 0 also t) is an observation node.
"""

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ..discretization import kernel_logpdf, kernel_logpdf_grad
from ..errors import ContractViolation

__all__ = ["PairTarget", "build_pair_target", "target_kind"]

_LOG_2PI = math.log(2 * math.pi)


@dataclass(eq=False)
class PairTarget:
    """Unnormalized log-density over a slot pair, with analytic gradient."""

    kind: str
    log_density: Callable
    grad: Callable
    level: Optional[int] = None
    step: Optional[int] = None
    upstream: object = None

    def __call__(self, u, v):
        return self.log_density(u, v)


def target_kind(level: int, step: int, steps_per_obs: int) -> str:
    """Classify grid step `step` at the given level."""
    if step == 0:
        return "initial_l0" if level == 0 else "initial"
    if (step + 1) % steps_per_obs == 0:
        return "pre_observation"
    return "interior"


def build_pair_target(model, obs_model, record, level: int, step: int,
                      upstream=None) -> PairTarget:
    """Assemble the log-target for grid slots (step, step+1) at a level.

    `upstream` is the filter component of the previous step's map; it is
    required for step > 0 and must be absent at step 0.
    """
    steps_per_obs = 2**level
    n_steps = steps_per_obs * (len(record) - 1)
    if not 0 <= step < n_steps:
        raise ContractViolation(f"step {step} outside grid of {n_steps} steps")
    kind = target_kind(level, step, steps_per_obs)
    if step > 0 and upstream is None:
        raise ContractViolation(f"step {step} needs the upstream filter map")
    if step == 0 and upstream is not None:
        raise ContractViolation("step 0 admits no upstream map")

    values = np.asarray(record.values, dtype=float)

    if kind in ("initial", "initial_l0"):
        y0 = values[0]
        y1 = values[1] if kind == "initial_l0" else None

        def log_density(u, v):
            u = np.asarray(u, dtype=float)
            v = np.asarray(v, dtype=float)
            out = (model.initial_logpdf(u)
                   + kernel_logpdf(model, level, u, v)
                   + obs_model.log_likelihood(u, y0))
            if y1 is not None:
                out = out + obs_model.log_likelihood(v, y1)
            return out

        def grad(u, v):
            u = np.asarray(u, dtype=float)
            v = np.asarray(v, dtype=float)
            d_x, d_next = kernel_logpdf_grad(model, level, u, v)
            du = (model.initial_dlogpdf(u) + d_x
                  + obs_model.log_likelihood_dx(u, y0))
            dv = np.broadcast_to(d_next, np.broadcast_shapes(u.shape, v.shape)).copy()
            if y1 is not None:
                dv += obs_model.log_likelihood_dx(v, y1)
            return du, dv

        return PairTarget(kind, log_density, grad, level, step, None)

    y_next = values[(step + 1) // steps_per_obs] if kind == "pre_observation" else None

    def log_density(u, v):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        state = upstream.evaluate(u)
        out = (-0.5 * u * u - 0.5 * _LOG_2PI
               + kernel_logpdf(model, level, state, v))
        if y_next is not None:
            out = out + obs_model.log_likelihood(v, y_next)
        return out

    def grad(u, v):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        state = upstream.evaluate(u)
        d_x, d_next = kernel_logpdf_grad(model, level, state, v)
        du = -u + d_x * upstream.partial(u)
        dv = np.broadcast_to(d_next, np.broadcast_shapes(u.shape, v.shape)).copy()
        if y_next is not None:
            dv += obs_model.log_likelihood_dx(v, y_next)
        return du, dv

    return PairTarget(kind, log_density, grad, level, step, upstream)
