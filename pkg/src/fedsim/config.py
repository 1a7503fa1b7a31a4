"""Experiment configuration: defaults, validation, JSON round-trip, overrides."""

from __future__ import annotations

import dataclasses
import json
import types
import typing
from dataclasses import dataclass, field

from .errors import ConfigError
from .nn import ModelSpec, SgdConfig

METHODS = ("fedcat", "fedcat_gc", "fedcat_dc", "fedavg", "fedprox", "scaffold")
DATASETS = ("mnist", "synth")

ALIASES = {"N": "num_devices", "K": "k", "E": "epochs", "lambda": "lam", "hidden": "hidden_layers"}


@dataclass
class ExperimentConfig:
    method: str = "fedcat"
    dataset: str = "synth"
    num_devices: int = 100
    participation: float = 0.1
    k: int | None = None  # derived as round(participation * N) when unset
    epochs: int = 5
    batch_size: int = 50
    lr: float = 0.01
    momentum: float = 0.9
    alpha: float = 0.1
    lam: int = 1
    epsilon: float = 0.5
    mu: float | None = None
    rounds: int = 100
    eval_every: int = 10
    seed: int = 0
    hidden_layers: list[int] = field(default_factory=lambda: [64])
    target_accuracy: float | None = None
    # dataset sources
    data_dir: str | None = None
    synth_classes: int = 10
    synth_samples_per_class: int = 500
    synth_test_per_class: int = 200
    synth_dim: int = 32
    synth_spread: float = 0.6
    # diagnostics
    scaffold_controls: bool = True
    record_wall_time: bool = False

    def __post_init__(self):
        self.validate()

    @property
    def num_selected(self) -> int:
        if self.k is not None:
            return self.k
        return max(1, int(round(self.participation * self.num_devices)))

    def sgd(self) -> SgdConfig:
        return SgdConfig(self.lr, self.momentum)

    def model_spec(self, input_dim: int, num_classes: int) -> ModelSpec:
        return ModelSpec(input_dim, tuple(self.hidden_layers), num_classes)

    def validate(self) -> None:
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}", field="method")
        if self.dataset not in DATASETS:
            raise ConfigError(f"dataset must be one of {DATASETS}, got {self.dataset!r}", field="dataset")
        if self.method == "fedprox":
            if self.mu is None:
                raise ConfigError("fedprox requires 'mu'", field="mu")
            if self.mu < 0:
                raise ConfigError("mu must be non-negative", field="mu")
        positive = ("num_devices", "epochs", "batch_size", "lam", "rounds", "eval_every",
                    "synth_classes", "synth_samples_per_class", "synth_dim")
        for name in positive:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1", field=name)
        if not 0 < self.participation <= 1:
            raise ConfigError("participation must lie in (0, 1]", field="participation")
        k = self.num_selected
        if not 1 <= k <= self.num_devices:
            raise ConfigError(f"K={k} must lie in [1, N={self.num_devices}]", field="k")
        if not self.alpha > 0:
            raise ConfigError("alpha must be positive", field="alpha")
        if not 0 <= self.epsilon <= 1:
            raise ConfigError("epsilon must lie in [0, 1]", field="epsilon")
        if self.lr < 0:
            raise ConfigError("lr must be non-negative", field="lr")
        if not 0 <= self.momentum < 1:
            raise ConfigError("momentum must lie in [0, 1)", field="momentum")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative", field="seed")
        if self.synth_test_per_class < 0 or self.synth_spread < 0:
            raise ConfigError("synthetic dataset settings must be non-negative", field="synth_spread")
        if self.target_accuracy is not None and not 0 <= self.target_accuracy <= 1:
            raise ConfigError("target_accuracy must lie in [0, 1]", field="target_accuracy")
        # an empty list means plain softmax regression
        if any(int(h) < 1 for h in self.hidden_layers):
            raise ConfigError("hidden layer widths must be positive", field="hidden_layers")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, value in raw.items():
            name = ALIASES.get(key, key)
            if name not in names:
                raise ConfigError(f"unknown config field {key!r}", field=key)
            kwargs[name] = value
        for name, value in kwargs.items():
            kwargs[name] = _coerce(name, value)
        return cls(**kwargs)

    @classmethod
    def from_json_file(cls, path) -> "ExperimentConfig":
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def with_overrides(self, assignments: list[str]) -> "ExperimentConfig":
        """Apply ``key=value`` strings (values parsed as JSON when possible)."""
        raw = self.to_dict()
        for item in assignments:
            if "=" not in item:
                raise ConfigError(f"override {item!r} is not key=value", field=item)
            key, text = item.split("=", 1)
            key = ALIASES.get(key.strip(), key.strip())
            if key not in raw:
                raise ConfigError(f"unknown config field {key!r}", field=key)
            try:
                value = json.loads(text)
            except json.JSONDecodeError:
                value = text
            if key == "hidden_layers" and isinstance(value, int):
                value = [value]
            raw[key] = value
        return ExperimentConfig.from_dict(raw)


_HINTS = typing.get_type_hints(ExperimentConfig)


def _coerce(name: str, value):
    hint = _HINTS[name]
    if value is None:
        if type(None) not in typing.get_args(hint):
            raise ConfigError(f"{name} may not be null", field=name)
        return None
    if typing.get_origin(hint) in (typing.Union, types.UnionType):
        hint = next(a for a in typing.get_args(hint) if a is not type(None))
    target = typing.get_origin(hint) or hint
    try:
        if target is bool:
            if isinstance(value, str):
                return value.lower() in ("1", "true", "yes")
            return bool(value)
        if target is int:
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        if target is float:
            return float(value)
        if target is list:
            if isinstance(value, str):
                value = [v for v in value.split(",") if v.strip()]
            return [int(v) for v in value]
        if target is str:
            return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"invalid value {value!r} for {name}", field=name) from None
    return value
