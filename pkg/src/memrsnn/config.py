"""Experiment configuration: dataclass schema, YAML/JSON loading and validation.

Every key is checked against the schema; unknown keys are rejected with the
nearest valid name, and the fully defaulted config can be echoed back so each
run records all hyperparameters it used.
"""

from __future__ import annotations

import dataclasses
import difflib
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from .devices import DeviceCalibration, DeviceError
from .network import ConfigError, CrossbarConfig, NetworkConfig
from .training import TrainConfig


@dataclass(frozen=True)
class Condition:
    memcapacitor: bool = False
    heterogeneous: bool = False
    trainable_tau: bool = False

    def __post_init__(self):
        if not self.memcapacitor and (self.heterogeneous or self.trainable_tau):
            raise ConfigError("heterogeneous or trainable time constants require memcapacitor: true")

    @property
    def label(self) -> str:
        if not self.memcapacitor:
            return "no-memcap"
        het = "het" if self.heterogeneous else "hom"
        tr = "trained" if self.trainable_tau else "fixed"
        return f"memcap-{het}-{tr}"


DEFAULT_CONDITIONS = (
    Condition(False, False, False),
    Condition(True, False, True),
    Condition(True, True, False),
    Condition(True, True, True),
)


@dataclass(frozen=True)
class DatasetConfig:
    kind: str = "synthetic"  # synthetic | evd
    path: Optional[str] = None
    seed: int = 0
    n_classes: int = 4
    n_channels: int = 32
    T: int = 100
    dt: float = 1e-3
    samples_per_class: int = 200
    jitter: float = 3.0
    noise_fraction: float = 0.05
    spikes_per_channel: int = 1
    min_gap: float = 10.0
    class_spread: Optional[float] = 4.0
    valid_fraction: float = 0.2
    test_fraction: float = 0.2

    def __post_init__(self):
        if self.kind not in ("synthetic", "evd"):
            raise ConfigError(f"dataset.kind must be 'synthetic' or 'evd', got {self.kind!r}")
        if self.kind == "evd" and not self.path:
            raise ConfigError("dataset.path is required when kind is 'evd'")
        if self.valid_fraction <= 0 or self.test_fraction < 0 or self.valid_fraction + self.test_fraction >= 1:
            raise ConfigError("need valid_fraction > 0, test_fraction >= 0 and their sum < 1")


@dataclass(frozen=True)
class NetworkOptions:
    """Network settings shared by every grid cell (sizes and mode flags come from the grid)."""

    threshold: float = 1.0
    beta_sg: float = 10.0
    tau_center: float = 0.02
    tau_out: float = 0.02
    tau_range: float = 0.05
    heterogeneity: float = 0.5
    cmw_center: float = 0.4
    tie_tau: bool = False
    init_gain_in: float = 80.0
    init_gain_rec: float = 10.0
    init_gain_out: float = 10.0


@dataclass(frozen=True)
class MemcapacitorOptions:
    c_low: float = 1.0
    c_high: float = 1.5
    n_levels: int = 8


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    sizes: tuple = (64, 128)
    conditions: tuple = DEFAULT_CONDITIONS
    seeds: tuple = (0, 1, 2, 3, 4)
    train: TrainConfig = field(default_factory=TrainConfig)
    network: NetworkOptions = field(default_factory=NetworkOptions)
    crossbar: CrossbarConfig = field(default_factory=CrossbarConfig)
    calibration: DeviceCalibration = field(default_factory=DeviceCalibration)
    memcapacitor: MemcapacitorOptions = field(default_factory=MemcapacitorOptions)
    eval_noise_draws: int = 10
    output: str = "results"

    def __post_init__(self):
        if not self.sizes or any(int(s) < 1 for s in self.sizes):
            raise ConfigError("sizes must be a non-empty list of positive integers")
        if not self.conditions:
            raise ConfigError("conditions must be non-empty")
        if not self.seeds:
            raise ConfigError("seeds must contain at least one integer")
        if self.eval_noise_draws < 1:
            raise ConfigError("eval_noise_draws must be >= 1")

    def network_config(self, size: int, cond: Condition, n_in: int, n_out: int) -> NetworkConfig:
        opts = dataclasses.asdict(self.network)
        return NetworkConfig(n_in=n_in, n_hidden=size, n_out=n_out, dt=self.dataset.dt,
                             memcapacitor=cond.memcapacitor, heterogeneous=cond.heterogeneous,
                             trainable_tau=cond.trainable_tau, crossbar=self.crossbar,
                             calibration=self.calibration, **opts)


# --------------------------------------------------------------------------- parsing

_ELEMENT_TYPES = {(ExperimentConfig, "sizes"): int, (ExperimentConfig, "conditions"): Condition,
                  (ExperimentConfig, "seeds"): int, (TrainConfig, "adam_betas"): float}


class ConfigValidationError(ConfigError):
    def __init__(self, problems: list[str]):
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {p}" for p in problems))
        self.problems = problems


def _convert(value, tp, loc: str, problems: list[str]):
    origin = typing.get_origin(tp)
    if origin is typing.Union:
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if value is None:
            return None
        return _convert(value, args[0], loc, problems)
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            problems.append(f"{loc}: expected a mapping, got {type(value).__name__}")
            return None
        return _build(tp, value, loc, problems)
    if tp is bool:
        if not isinstance(value, bool):
            problems.append(f"{loc}: expected true/false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            problems.append(f"{loc}: expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            problems.append(f"{loc}: expected a number, got {value!r}")
            return value
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            problems.append(f"{loc}: expected a string, got {value!r}")
        return value
    return value


def _build(cls, data: dict, loc: str, problems: list[str]):
    hints = typing.get_type_hints(cls)
    names = [f.name for f in dataclasses.fields(cls)]
    kwargs = {}
    n_before = len(problems)
    for key, value in data.items():
        where = f"{loc}.{key}" if loc else str(key)
        if key not in names:
            nearest = max(names, key=lambda n: difflib.SequenceMatcher(None, str(key), n).ratio())
            problems.append(f"{where}: unknown key (nearest valid key: {nearest!r})")
            continue
        elem = _ELEMENT_TYPES.get((cls, key))
        if elem is not None:
            if not isinstance(value, list):
                problems.append(f"{where}: expected a list, got {value!r}")
                continue
            kwargs[key] = tuple(_convert(v, elem, f"{where}[{i}]", problems) for i, v in enumerate(value))
        else:
            kwargs[key] = _convert(value, hints[key], where, problems)
    try:
        return cls(**kwargs)
    except (ConfigError, DeviceError, ValueError, TypeError) as e:
        if len(problems) == n_before:
            problems.append(f"{loc or '<root>'}: {e}")
        return None


def parse_config(data: Optional[dict], base_dir: Optional[Path] = None) -> ExperimentConfig:
    """Validate a config mapping; raises ConfigValidationError listing every problem."""
    problems: list[str] = []
    cfg = _build(ExperimentConfig, data or {}, "", problems)
    if problems or cfg is None:
        raise ConfigValidationError(problems or ["configuration could not be built"])
    if cfg.dataset.kind == "evd":
        path = Path(cfg.dataset.path)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        cfg = dataclasses.replace(cfg, dataset=dataclasses.replace(cfg.dataset, path=str(path)))
    return cfg


def validate_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except (OSError, yaml.YAMLError) as e:
        raise ConfigValidationError([f"{path}: {e}"]) from None
    if data is not None and not isinstance(data, dict):
        raise ConfigValidationError([f"{path}: top level must be a mapping"])
    return parse_config(data, base_dir=path.parent)


def to_dict(cfg) -> dict:
    """Plain-data echo of a (resolved) config, suitable for YAML/JSON."""

    def plain(v):
        if dataclasses.is_dataclass(v):
            return {f.name: plain(getattr(v, f.name)) for f in dataclasses.fields(v)}
        if isinstance(v, (list, tuple)):
            return [plain(x) for x in v]
        return v

    return plain(cfg)


def dump_config(cfg) -> str:
    return yaml.safe_dump(to_dict(cfg), sort_keys=False)
