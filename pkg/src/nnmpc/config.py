"""Application configuration: one flat JSON file with benchmark defaults
baked in, so every subcommand runs without any configuration at all."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import ConfigError
from .harness import DisturbanceSpec
from .linearize import DEFAULT_TS
from .mlp import TrainConfig
from .mpc import MpcConfig
from .plant import PlantParams


@dataclass(frozen=True)
class HarnessConfig:
    steps: int = 100
    disturbance: DisturbanceSpec | None = None

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError(f"harness steps must be >= 1, got {self.steps}")


@dataclass(frozen=True)
class IoConfig:
    dataset: str = "dataset.csv"
    model: str = "model.json"
    report: str = "report.json"
    trajectory: str = "trajectory.csv"


@dataclass(frozen=True)
class AppConfig:
    plant: PlantParams = field(default_factory=PlantParams)
    mpc: MpcConfig = field(default_factory=MpcConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    harness: HarnessConfig = field(default_factory=HarnessConfig)
    io: IoConfig = field(default_factory=IoConfig)
    ts: float = DEFAULT_TS
    u_s: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.ts <= 0:
            raise ValueError(f"sampling period ts must be positive, got {self.ts}")


def load_config(path=None) -> AppConfig:
    """Read the JSON config; missing fields fall back to benchmark defaults."""
    if path is None:
        return AppConfig()
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    return config_from_dict(raw)


def config_from_dict(raw: dict) -> AppConfig:
    known = {"plant", "mpc", "train", "harness", "io", "ts", "u_s", "seed"}
    extra = set(raw) - known
    if extra:
        raise ConfigError(f"unknown config section(s): {sorted(extra)}")
    try:
        plant = PlantParams.from_dict(raw.get("plant", {}))
        mpc = MpcConfig.from_dict(raw.get("mpc", {}))
        train = TrainConfig.from_dict(raw.get("train", {}))
        hraw = dict(raw.get("harness", {}))
        dist = hraw.pop("disturbance", None)
        harness = HarnessConfig(disturbance=DisturbanceSpec.from_dict(dist), **hraw)
        io = IoConfig(**raw.get("io", {}))
        return AppConfig(plant=plant, mpc=mpc, train=train, harness=harness, io=io,
                         ts=float(raw.get("ts", DEFAULT_TS)),
                         u_s=float(raw.get("u_s", 5.0)),
                         seed=int(raw.get("seed", 0)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
