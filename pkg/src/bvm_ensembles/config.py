"""Experiment configuration: defaults, named presets and the flat
``key = value`` file format.

Example file::

    # boston, BVM loss, standard benchmark protocol
    preset = uci
    dataset = data/uci/boston.csv
    loss = bvm
    epsilon = 0.01
    repetitions = 20
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .ensemble import Schedule
from .errors import ConfigError
from .losses import LossSpec
from .nn import Architecture


@dataclass(frozen=True)
class ExperimentConfig:
    # data
    dataset: str = "heteroscedastic"  # CSV path or generator name
    target: str = ""  # target column; empty means last
    n_samples: int = 768  # generator datasets only
    n_features: int = 8
    noise_sd: float = 3.0  # toy-cubic only
    normalize_targets: bool = True
    # model and loss
    loss: str = "bvm"
    epsilon: float = 0.01
    members: int = 5
    hidden: str = "50"
    mean_head: str = "sigmoid"
    variance_head: str = "sigmoid"
    # optimisation
    epochs: int = 40
    batch_size: int = 32
    lr: float = 3e-4
    weight_decay: float = 0.01
    optimizer: str = "adamw"
    # protocol
    split: str = "random"  # or "outlier"
    test_fraction: float = 0.1
    outlier_fraction: float = 0.1
    forest_trees: int = 100
    forest_psi: int = 0  # 0 means min(256, N)
    repetitions: int = 20
    seed: int = 0
    n_jobs: int = 1
    out: str = "runs"

    def __post_init__(self):
        if self.members < 1:
            raise ConfigError("members must be >= 1")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if self.split not in ("random", "outlier"):
            raise ConfigError(f"unknown split mode {self.split!r}")
        try:
            self.loss_spec()
            self.schedule()
            self.hidden_sizes()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def hidden_sizes(self) -> tuple[int, ...]:
        text = str(self.hidden).strip()
        return tuple(int(h) for h in text.replace(" ", "").split(",") if h) if text else ()

    def loss_spec(self, kind: str | None = None) -> LossSpec:
        return LossSpec(kind or self.loss, self.epsilon)

    def schedule(self) -> Schedule:
        return Schedule(self.epochs, self.batch_size, self.lr, self.weight_decay, self.optimizer)

    def architecture(self, input_dim: int, kind: str | None = None) -> Architecture:
        two = self.loss_spec(kind).two_headed
        return Architecture(input_dim, self.hidden_sizes(), 2 if two else 1, self.mean_head, self.variance_head)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        return "".join(f"{f.name} = {_format(getattr(self, f.name))}\n" for f in fields(self))


PRESETS: dict[str, dict] = {
    # random 90/10 splits, AdamW, the UCI benchmark protocol
    "uci": {},
    "protein": {"hidden": "100", "repetitions": 5},
    # outlier splits use plain Adam with a larger step and smaller batches
    "ood": {
        "split": "outlier",
        "optimizer": "adam",
        "lr": 3e-3,
        "batch_size": 16,
        "weight_decay": 0.0,
        "repetitions": 5,
    },
    "calibrate": {"repetitions": 5},
    # 1-D cubic toy: raw targets, so an unbounded mean and softplus variance
    "toy": {
        "dataset": "toy-cubic",
        "n_samples": 20,
        "noise_sd": 3.0,
        "normalize_targets": False,
        "epsilon": 1.0,
        "hidden": "100",
        "mean_head": "identity",
        "variance_head": "softplus",
        "epochs": 1000,
        "batch_size": 32,
        "lr": 0.01,
        "weight_decay": 0.0,
        "optimizer": "adam",
        "repetitions": 1,
    },
}


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value) if isinstance(value, float) else str(value)


def _coerce(name: str, kind, raw: str):
    raw = raw.strip()
    try:
        if kind in (bool, "bool"):
            lowered = raw.lower()
            if lowered not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return lowered in ("true", "1", "yes")
        if kind in (int, "int"):
            return int(raw)
        if kind in (float, "float"):
            return float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None
    return raw


_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def parse_overrides(pairs: dict[str, str]) -> dict:
    out = {}
    for key, raw in pairs.items():
        key = key.strip().replace("-", "_")
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        out[key] = _coerce(key, _FIELD_TYPES[key], raw)
    return out


def read_config_text(text: str) -> dict[str, str]:
    pairs = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = line.split("=", 1)
        pairs[key.strip()] = value.strip()
    return pairs


def build_config(preset: str | None = None, path=None, overrides: dict[str, str] | None = None) -> ExperimentConfig:
    """Defaults, then the preset, then the file, then explicit overrides."""
    pairs = read_config_text(Path(path).read_text()) if path else {}
    preset = pairs.pop("preset", None) or preset or "uci"
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    values = dict(PRESETS[preset])
    values.update(parse_overrides(pairs))
    values.update(parse_overrides(overrides or {}))
    return ExperimentConfig(**values)
