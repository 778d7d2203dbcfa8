"""Multilevel Monte Carlo smoothing for discretely observed SDEs via transport-map couplings."""

from .config import ExperimentConfig, load_config
from .models import (
    MODEL_NAMES,
    make_langevin,
    make_linear_gaussian,
    make_model,
    make_nonlinear_diffusion,
    simulate_truth,
)
from .multilevel import allocate, choose_L, rate_fit, telescoped_estimate
from .sampling import (
    discounted_sum,
    sample_coupled,
    sample_single,
    terminal_state,
)
from .smoother import MultilevelTransportSmoother, TransportSmoother
from .transport import (
    apply_composition,
    build_level_maps,
    load_maps,
    save_maps,
)

__version__ = "0.1.0"

__all__ = [
    "ExperimentConfig",
    "MODEL_NAMES",
    "MultilevelTransportSmoother",
    "TransportSmoother",
    "allocate",
    "apply_composition",
    "build_level_maps",
    "choose_L",
    "discounted_sum",
    "load_config",
    "load_maps",
    "make_langevin",
    "make_linear_gaussian",
    "make_model",
    "make_nonlinear_diffusion",
    "rate_fit",
    "sample_coupled",
    "sample_single",
    "save_maps",
    "simulate_truth",
    "telescoped_estimate",
    "terminal_state",
]
