"""Experiment configuration: JSON loading, validation and content hashing."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, replace
from typing import Optional

from .errors import ConfigError
from .models import MODEL_NAMES
from .sampling import Functional, discounted_sum, terminal_state

__all__ = [
    "ExperimentConfig",
    "apply_paper_scale",
    "config_hash",
    "functional_from_config",
    "load_config",
]

_FUNCTIONALS = ("terminal_state", "discounted_sum")


@dataclass(frozen=True)
class ExperimentConfig:
    """Desk-scale experiment settings; see load_config for the file format."""

    model: str = "linear_gaussian"
    levels: int = 4
    order: int = 4
    quad_order: int = 10
    tol: Optional[float] = None
    max_iter: int = 200
    functional: str = "terminal_state"
    kappa: float = 2.0
    n0: int = 256_000
    n1: Optional[int] = None
    pilot_size: int = 10_000
    beta: float = 2.0
    zeta: float = 1.0
    seed: int = 0
    replicates: int = 20
    batch_size: int = 1000
    rate_pairs: int = 10_000
    max_batches: Optional[int] = None
    reference_level: int = 10
    reference_samples: int = 200_000
    choose_l_constant: float = 1.0
    out_dir: str = "out"

    def __post_init__(self):
        if self.model not in MODEL_NAMES:
            raise ConfigError(f"unknown model {self.model!r}; "
                              f"choose one of {sorted(MODEL_NAMES)}")
        if self.functional not in _FUNCTIONALS:
            raise ConfigError(f"unknown functional {self.functional!r}; "
                              f"choose one of {_FUNCTIONALS}")
        positive = {
            "levels": self.levels, "order": self.order,
            "quad_order": self.quad_order, "max_iter": self.max_iter,
            "kappa": self.kappa, "n0": self.n0, "pilot_size": self.pilot_size,
            "beta": self.beta, "zeta": self.zeta,
            "replicates": self.replicates, "batch_size": self.batch_size,
            "rate_pairs": self.rate_pairs,
            "reference_level": self.reference_level,
            "reference_samples": self.reference_samples,
            "choose_l_constant": self.choose_l_constant,
        }
        for name, value in positive.items():
            if not value > 0:
                raise ConfigError(f"{name} must be positive, got {value!r}")
        if self.tol is not None and not self.tol > 0:
            raise ConfigError(f"tol must be positive, got {self.tol!r}")
        if self.n1 is not None and self.n1 < 1:
            raise ConfigError(f"n1 must be >= 1, got {self.n1!r}")
        if self.max_batches is not None and self.max_batches < 0:
            raise ConfigError(f"max_batches must be >= 0, got {self.max_batches!r}")
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed!r}")

    def to_dict(self) -> dict:
        return asdict(self)


def load_config(path) -> ExperimentConfig:
    """Read a JSON object of ExperimentConfig fields; unknown keys fail."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config file must hold a JSON object")
    known = set(ExperimentConfig.__dataclass_fields__)
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        return ExperimentConfig(**raw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def config_hash(config: ExperimentConfig) -> str:
    """sha256 of the canonical JSON form; stable across field order."""
    canon = json.dumps(config.to_dict(), sort_keys=True,
                       separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def apply_paper_scale(config: ExperimentConfig) -> ExperimentConfig:
    """Switch the desk presets to the full-scale sample counts."""
    return replace(config, n0=2**13 * 1000, replicates=50)


def functional_from_config(config: ExperimentConfig) -> Functional:
    if config.functional == "terminal_state":
        return terminal_state()
    return discounted_sum(config.kappa)
