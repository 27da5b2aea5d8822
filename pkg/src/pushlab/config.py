"""Run configurations for the command-line tools.

Settings resolve in three layers: dataclass defaults, then a YAML mapping
given with ``--config``, then explicit command-line flags. Unknown keys are
rejected so that typos never fall back silently to a default.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import yaml

from .agent.train import TrainConfig


@dataclass(frozen=True)
class EncoderTrainConfig:
    seed: int = 0
    n_masks: int = 5000
    n_holdout: int = 500
    epochs: int = 600
    batch_size: int = 128
    lr: float = 1e-3
    final_lr_fraction: float = 0.05
    augment: bool = True
    preset: str = "table1"
    table_bounds: tuple[float, float, float, float] = (-0.2, -0.2, 0.2, 0.2)
    spawn_margin: float = 0.06


@dataclass(frozen=True)
class EvalConfig:
    checkpoint: str | None = None
    observation: str | None = None
    encoder_path: str | None = None
    preset: str = "small_friction"
    sampler: str = "uniform"
    table_bounds: tuple[float, float, float, float] = (-0.2, -0.2, 0.2, 0.2)
    episodes: int = 100
    seed: int = 0
    export_trajectories: bool = True


@dataclass(frozen=True)
class FrictionConfig:
    seed: int = 0
    n: int = 1_000_000
    bins: int = 50
    preset: str = "table1"


class ConfigError(ValueError):
    pass


def read_yaml(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"--config: no such file {path}")
    with open(path) as f:
        data = yaml.safe_load(f)
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping at the top level")
    return data


def build(cls, file_values: dict | None = None, overrides: dict | None = None):
    """Instantiate ``cls`` from defaults, file values and non-None overrides."""
    names = {f.name for f in dataclasses.fields(cls)}
    values = dict(file_values or {})
    unknown = sorted(set(values) - names)
    if unknown:
        raise ConfigError(f"unknown config keys for {cls.__name__}: {', '.join(unknown)}")
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    for key in ("table_bounds", "hidden"):
        if key in values and isinstance(values[key], list):
            values[key] = tuple(values[key])
    try:
        return cls(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def to_dict(cfg) -> dict:
    out = dataclasses.asdict(cfg)
    return {k: list(v) if isinstance(v, tuple) else v for k, v in out.items()}


def write_resolved(cfg, path, **extra) -> None:
    data = {"command": extra.pop("command", None), **to_dict(cfg), **extra}
    with open(path, "w") as f:
        yaml.safe_dump(data, f, sort_keys=False)


__all__ = ["ConfigError", "EncoderTrainConfig", "EvalConfig", "FrictionConfig", "TrainConfig", "build", "read_yaml",
           "to_dict", "write_resolved"]
