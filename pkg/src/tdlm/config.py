"""Training configuration: defaults, key=value config files, validation.

Defaults follow the model's standard hyper-parameter settings; the
supervised mode swaps in its own deviations (a=80, b=100, m3=150,
n_epoch=20) for any of those fields the user did not set explicitly.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .errors import ConfigError

SUPERVISED_OVERRIDES = {"a": 80, "b": 100, "m3": 150, "n_epoch": 20}


@dataclass
class TrainConfig:
    m1: int = 3              # output sequence length for the topic model
    m2: int = 30             # sequence length for the language model
    m3: int = 300            # maximum document length (content words)
    n_batch: int = 64
    n_layer: int = 1
    n_hidden: int = 600
    n_epoch: int = 10
    k: int = 100             # number of topics
    e: int = 300             # word embedding size
    h: int = 2               # convolutional filter width
    a: int = 20              # topic input vector size / number of conv filters
    b: int = 50              # topic output vector size
    lr: float = 0.001
    p1: float = 0.4          # topic-model dropout keep probability
    p2: float = 0.6          # language-model dropout keep probability
    seed: int = 1
    clip_norm: float = 5.0   # global gradient-norm clip; 0 disables
    vanilla: bool = False    # plain LSTM language model, no topic component
    supervised: bool = False
    tags: bool = False
    f: int = 5               # tag embedding size
    min_count: int = 10      # vocabulary frequency floor
    top_exclude_fraction: float = 0.001

    _INT_FIELDS = ("m1", "m2", "m3", "n_batch", "n_layer", "n_hidden", "n_epoch",
                   "k", "e", "h", "a", "b", "seed", "f", "min_count")
    _FLOAT_FIELDS = ("lr", "p1", "p2", "clip_norm", "top_exclude_fraction")
    _BOOL_FIELDS = ("vanilla", "supervised", "tags")

    def validate(self):
        for name in ("m1", "m2", "m3", "n_batch", "n_layer", "n_hidden",
                     "k", "e", "h", "a", "b", "f", "min_count"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.n_epoch < 0:
            raise ConfigError(f"n_epoch must be >= 0, got {self.n_epoch}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        for name in ("p1", "p2"):
            v = getattr(self, name)
            if not (0.0 < v <= 1.0):
                raise ConfigError(f"{name} must be in (0, 1], got {v}")
        if self.clip_norm < 0:
            raise ConfigError(f"clip_norm must be >= 0, got {self.clip_norm}")
        if not (0.0 <= self.top_exclude_fraction < 1.0):
            raise ConfigError(f"top_exclude_fraction must be in [0, 1), got "
                              f"{self.top_exclude_fraction}")
        if self.vanilla and (self.supervised or self.tags):
            raise ConfigError("vanilla mode is incompatible with supervised/tags")
        return self

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}

    @classmethod
    def field_names(cls):
        return [f.name for f in dataclasses.fields(cls)]

    @classmethod
    def from_dict(cls, values: dict) -> "TrainConfig":
        cfg = cls()
        cfg.apply(values)
        return cfg

    def apply(self, values: dict):
        """Set fields from a {name: value} dict; strings are coerced by type."""
        explicit = set()
        for key, value in values.items():
            if key not in self.field_names():
                raise ConfigError(f"unknown config key {key!r}")
            setattr(self, key, _coerce(key, value))
            explicit.add(key)
        if self.supervised:
            for key, default in SUPERVISED_OVERRIDES.items():
                if key not in explicit:
                    setattr(self, key, default)
        self.validate()
        return self


def _coerce(key: str, value):
    if not isinstance(value, str):
        if key in TrainConfig._BOOL_FIELDS:
            return bool(value)
        if key in TrainConfig._INT_FIELDS:
            return int(value)
        return float(value)
    text = value.strip()
    if key in TrainConfig._BOOL_FIELDS:
        low = text.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {value!r}")
    try:
        if key in TrainConfig._INT_FIELDS:
            return int(text)
        return float(text)
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from exc


def parse_config_file(path: str) -> dict:
    """Read flat ``key = value`` lines; '#' starts a comment."""
    values: dict = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, value = stripped.split("=", 1)
            values[key.strip()] = value.strip()
    return values


def load_config(path=None, overrides=None) -> TrainConfig:
    """Build a TrainConfig from an optional file plus override pairs (flags win)."""
    values = parse_config_file(path) if path else {}
    if overrides:
        values.update(overrides)
    cfg = TrainConfig()
    cfg.apply(values)
    return cfg


def format_config(cfg: TrainConfig) -> str:
    return "\n".join(f"{name} = {getattr(cfg, name)}" for name in cfg.field_names())
