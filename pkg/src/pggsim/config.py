"""Experiment configuration: defaults, JSON parsing, strict validation.

A config file is a flat JSON object whose keys match the field names below.
Unknown keys are rejected rather than ignored so a typo cannot silently run
the default. ``algorithm: "grpo"`` is the unconstrained variant and forces
rho to 0, making it byte-for-byte the grpo_gcc path with the constraint off.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, fields
from typing import Any

from .errors import ConfigError
from .lattice import HALF_HALF, InitMode

ALGORITHMS = ("grpo_gcc", "grpo", "qlearning", "fermi")
DEFAULT_SNAPSHOT_EPOCHS = (0, 1, 10, 100, 1000)

__all__ = ["ALGORITHMS", "ExperimentConfig", "parse_config", "config_from_dict", "config_to_dict", "run_id"]


@dataclass(frozen=True)
class ExperimentConfig:
    algorithm: str = "grpo_gcc"
    L: int = 200
    r: float = 5.0
    rho: float = 1.0
    alpha: float = 1e-4            # Adam base learning rate
    beta: float = 0.04             # KL penalty weight
    clip_eps: float = 0.2
    eta: int = 8                   # candidates per agent
    zeta: int = 3                  # inner updates per epoch
    epochs: int = 1000
    seed: int = 42
    init_mode: InitMode = HALF_HALF
    hidden: tuple[int, int, int] = (64, 64, 64)
    ref_update_period: int = 1
    lr_halve_period: int = 1000
    sigma_guard: float = 1e-8
    snapshot_epochs: tuple[int, ...] = DEFAULT_SNAPSHOT_EPOCHS
    output_dir: str | None = None
    workers: int = 1
    q_alpha: float = 0.1
    q_gamma: float = 0.9
    q_epsilon: float = 0.02
    fermi_k: float = 0.5

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm: {self.algorithm!r} (choose from {', '.join(ALGORITHMS)})")
        if self.algorithm == "grpo" and self.rho != 0.0:
            object.__setattr__(self, "rho", 0.0)
        if isinstance(self.init_mode, str):
            try:
                object.__setattr__(self, "init_mode", InitMode(self.init_mode))
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        object.__setattr__(self, "hidden", tuple(self.hidden))
        object.__setattr__(self, "snapshot_epochs", tuple(self.snapshot_epochs))
        self._validate()

    def _validate(self):
        def bad(msg):
            raise ConfigError(msg)

        if self.L < 2:
            bad(f"L must be >= 2, got {self.L}")
        if self.r <= 0.0:
            bad(f"r must be > 0, got {self.r}")
        if self.rho < 0.0:
            bad(f"rho must be >= 0, got {self.rho}")
        if self.alpha <= 0.0:
            bad(f"alpha must be > 0, got {self.alpha}")
        if self.beta < 0.0:
            bad(f"beta must be >= 0, got {self.beta}")
        if not 0.0 < self.clip_eps < 1.0:
            bad(f"clip_eps must be in (0, 1), got {self.clip_eps}")
        if self.eta < 2:
            bad("eta must be >= 2")
        if self.zeta < 1:
            bad(f"zeta must be >= 1, got {self.zeta}")
        if self.epochs < 1:
            bad(f"epochs must be >= 1, got {self.epochs}")
        if len(self.hidden) != 3 or any(h < 1 for h in self.hidden):
            bad(f"hidden must be three positive widths, got {self.hidden}")
        if self.ref_update_period < 1:
            bad(f"ref_update_period must be >= 1, got {self.ref_update_period}")
        if self.lr_halve_period < 1:
            bad(f"lr_halve_period must be >= 1, got {self.lr_halve_period}")
        if self.sigma_guard <= 0.0:
            bad(f"sigma_guard must be > 0, got {self.sigma_guard}")
        if any(e < 0 for e in self.snapshot_epochs):
            bad(f"snapshot_epochs must be non-negative, got {self.snapshot_epochs}")
        if self.workers < 1:
            bad(f"workers must be >= 1, got {self.workers}")
        if not 0.0 < self.q_alpha <= 1.0:
            bad(f"q_alpha must be in (0, 1], got {self.q_alpha}")
        if not 0.0 <= self.q_gamma < 1.0:
            bad(f"q_gamma must be in [0, 1), got {self.q_gamma}")
        if not 0.0 <= self.q_epsilon <= 1.0:
            bad(f"q_epsilon must be in [0, 1], got {self.q_epsilon}")
        if self.fermi_k <= 0.0:
            bad(f"fermi_k must be > 0, got {self.fermi_k}")


_INT_FIELDS = {"L", "eta", "zeta", "epochs", "seed", "ref_update_period", "lr_halve_period", "workers"}
_FLOAT_FIELDS = {"r", "rho", "alpha", "beta", "clip_eps", "sigma_guard", "q_alpha", "q_gamma", "q_epsilon", "fermi_k"}


def _coerce(name: str, value: Any) -> Any:
    if name in _INT_FIELDS:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name} must be an integer, got {value!r}")
        return value
    if name in _FLOAT_FIELDS:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name} must be a number, got {value!r}")
        return float(value)
    if name == "algorithm":
        if not isinstance(value, str):
            raise ConfigError(f"algorithm must be a string, got {value!r}")
        return value
    if name == "init_mode":
        if isinstance(value, str):
            return value
        if isinstance(value, dict):
            extra = set(value) - {"kind", "p"}
            if extra or "kind" not in value:
                raise ConfigError(f"init_mode object must have keys kind[, p], got {sorted(value)}")
            try:
                return InitMode(value["kind"], float(value.get("p", 0.5)))
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        raise ConfigError(f"init_mode must be a string or object, got {value!r}")
    if name == "hidden":
        if not isinstance(value, (list, tuple)) or len(value) != 3 or any(isinstance(v, bool) or not isinstance(v, int) for v in value):
            raise ConfigError(f"hidden must be a list of three integers, got {value!r}")
        return tuple(value)
    if name == "snapshot_epochs":
        if not isinstance(value, (list, tuple)) or any(isinstance(v, bool) or not isinstance(v, int) for v in value):
            raise ConfigError(f"snapshot_epochs must be a list of integers, got {value!r}")
        return tuple(value)
    if name == "output_dir":
        if value is not None and not isinstance(value, str):
            raise ConfigError(f"output_dir must be a string, got {value!r}")
        return value
    raise ConfigError(f"unknown config key: {name}")


def config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError(f"config must be a JSON object, got {type(data).__name__}")
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown config key: {unknown[0]}")
    return ExperimentConfig(**{k: _coerce(k, v) for k, v in data.items()})


def parse_config(text: str) -> ExperimentConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    return config_from_dict(data)


def config_to_dict(config: ExperimentConfig) -> dict:
    """Round-trippable plain-JSON form, used for hashing and provenance."""
    out = {}
    for f in fields(ExperimentConfig):
        value = getattr(config, f.name)
        if isinstance(value, InitMode):
            value = {"kind": value.kind, "p": value.p}
        elif isinstance(value, tuple):
            value = list(value)
        out[f.name] = value
    return out


def run_id(config: ExperimentConfig) -> str:
    """Deterministic directory name for one run's artifacts."""
    canonical = json.dumps(config_to_dict(config), sort_keys=True, separators=(",", ":"))
    digest = hashlib.sha256(canonical.encode("ascii")).hexdigest()[:8]
    return f"{config.algorithm}_L{config.L}_r{config.r:g}_seed{config.seed}_{digest}"
