"""Scenario configuration (one flat JSON document)."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

MODES = ("raw", "quantized", "centralized_raw", "centralized_quantized")


@dataclass(frozen=True)
class ScenarioConfig:
    # geometry
    region_size: float = 1500.0
    sensor_grid: int = 15
    node_grid: int = 3
    comm_radius: float = 550.0
    k_active: int = 3
    reselect_active: bool = True

    # dynamics: clockwise coordinated turn with white-noise acceleration
    motion: str = "coordinated_turn"
    omega: float = math.pi / 100.0
    T: float = 1.0
    accel_psd: float = 0.1

    # bearing noise
    r0: float = 6.25e-4
    d0: float = 500.0
    r_min: float = 1e-6

    # initial truth is drawn from N(initial_state, diag(prior_std**2))
    initial_state: tuple = (300.0, 15.0, 1100.0, 0.0)
    prior_std: tuple = (30.0, 3.0, 30.0, 3.0)

    # quantizer
    bits: int = 8
    quant_lo: float = -math.pi
    quant_hi: float = math.pi

    # filters
    n_particles: int = 500
    n_global_particles: int = 500
    ess_threshold: float = 0.5
    feedback: bool = False

    # consensus
    consensus_iterations: int = 100
    epsilon: float | None = None
    consensus_tol: float = 1e-9

    # Monte-Carlo
    trials: int = 20
    steps: int = 50
    seed: int = 1
    mode: str = "quantized"
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "initial_state", tuple(float(v) for v in self.initial_state))
        object.__setattr__(self, "prior_std", tuple(float(v) for v in self.prior_std))
        self.validate()

    def validate(self) -> None:
        positive = ["region_size", "sensor_grid", "node_grid", "k_active", "T", "accel_psd", "r0", "d0",
                    "r_min", "n_particles", "n_global_particles", "trials"]
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        non_negative = ["comm_radius", "consensus_iterations", "steps", "consensus_tol"]
        for name in non_negative:
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.motion not in ("coordinated_turn", "constant_velocity"):
            raise ConfigError(f"unknown motion model {self.motion!r}")
        if self.bits < 1:
            raise ConfigError("bits must be at least 1")
        if not self.quant_lo < self.quant_hi:
            raise ConfigError("quantizer range is empty")
        if len(self.initial_state) != 4 or len(self.prior_std) != 4:
            raise ConfigError("initial_state and prior_std need four entries")
        if min(self.prior_std) <= 0:
            raise ConfigError("prior_std entries must be positive")
        if not 0 <= self.ess_threshold <= 1:
            raise ConfigError("ess_threshold must lie in [0, 1]")
        if self.n_particles < 2 or self.n_global_particles < 2:
            raise ConfigError("particle filters need at least two particles")
        if self.epsilon is not None and self.epsilon <= 0:
            raise ConfigError("epsilon must be positive")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")

    @property
    def prior_mean(self) -> np.ndarray:
        return np.array(self.initial_state)

    @property
    def prior_cov(self) -> np.ndarray:
        return np.diag(np.square(self.prior_std))

    @property
    def quantized(self) -> bool:
        return self.mode in ("quantized", "centralized_quantized")

    @property
    def centralized(self) -> bool:
        return self.mode.startswith("centralized")

    def replace(self, **changes) -> "ScenarioConfig":
        try:
            return dataclasses.replace(self, **changes)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["initial_state"] = list(self.initial_state)
        d["prior_std"] = list(self.prior_std)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc


def load_config(path) -> ScenarioConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return ScenarioConfig.from_dict(data)
