"""
Training configuration and its flat key = value file format.

Files are read with python-dotenv, so the usual .env syntax applies
(comments, quoting, blank lines). Model fields are written as model.<field>;
a bare model field name is accepted too when no training field shares it.
"""

import os
from dataclasses import dataclass, field, fields
from typing import Dict, Iterable, Optional

from dotenv import dotenv_values

from errors import ConfigError
from model.modes import ModelConfig

MODEL_PREFIX = 'model.'
_TRUE = ('1', 'true', 'yes', 'on')
_FALSE = ('0', 'false', 'no', 'off')


@dataclass
class TrainConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    data_path: str = ''
    batch_size: int = 16
    seq_len: int = 128
    steps: int = 2000
    warmup_steps: int = 50
    lr_max: float = 2e-3
    lr_min: float = 4e-4
    weight_decay: float = 0.1
    optimizer: str = 'adamw'
    beta1: float = 0.9
    beta2: float = 0.95
    adam_eps: float = 1e-8
    log_every: int = 10
    eval_every: int = 100
    seed: int = 0
    split_fraction: float = 0.1
    record_wall_time: bool = False

    def validate(self) -> 'TrainConfig':
        from training.optimizer import OPTIMIZERS

        self.resolved_model().validate()
        for name in ('batch_size', 'seq_len', 'steps', 'log_every', 'eval_every'):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.warmup_steps < 0 or self.warmup_steps >= self.steps:
            raise ConfigError(
                f"warmup_steps ({self.warmup_steps}) must be in [0, steps) with steps = {self.steps}")
        if self.lr_min < 0 or self.lr_min > self.lr_max:
            raise ConfigError(f"need 0 <= lr_min <= lr_max, got lr_min={self.lr_min}, lr_max={self.lr_max}")
        if self.eval_every % self.log_every:
            raise ConfigError(
                f"eval_every ({self.eval_every}) must be a multiple of log_every ({self.log_every})")
        if not 0.0 < self.split_fraction < 1.0:
            raise ConfigError(f"split_fraction must be in (0, 1), got {self.split_fraction}")
        if self.seq_len > self.model.max_seq_len:
            raise ConfigError(
                f"seq_len ({self.seq_len}) exceeds model.max_seq_len ({self.model.max_seq_len})")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"unknown optimizer {self.optimizer!r}; available: {', '.join(OPTIMIZERS)}")
        return self

    def resolved_model(self) -> ModelConfig:
        """Model config with the run seed in force"""
        values = self.model.to_dict()
        values['seed'] = self.seed
        return ModelConfig.from_dict(values)

    def to_flat(self) -> Dict[str, object]:
        flat = {}
        for f in fields(self):
            if f.name == 'model':
                for key, value in self.model.to_dict().items():
                    flat[MODEL_PREFIX + key] = value
            else:
                flat[f.name] = getattr(self, f.name)
        return flat


def _coerce(key: str, raw: Optional[str], default):
    if raw is None:
        raise ConfigError(f"{key} has no value")
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            lowered = raw.lower()
            if lowered in _TRUE:
                return True
            if lowered in _FALSE:
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot read {raw!r} as {type(default).__name__}")
    return raw


def parse_overrides(items: Iterable[str]) -> Dict[str, str]:
    """['key=value', ...] -> {'key': 'value'}"""
    overrides = {}
    for item in items:
        if '=' not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, value = item.split('=', 1)
        overrides[key.strip()] = value
    return overrides


def _canonical_key(key: str, train_keys, model_keys) -> str:
    if key in train_keys and key != 'model':
        return key
    if key.startswith(MODEL_PREFIX) and key[len(MODEL_PREFIX):] in model_keys:
        return key
    if key in model_keys:
        return MODEL_PREFIX + key
    raise ConfigError(f"unknown config key: {key}")


def build_train_config(values: Dict[str, Optional[str]]) -> TrainConfig:
    """TrainConfig from string values keyed by field name"""
    base = TrainConfig()
    train_defaults = {f.name: getattr(base, f.name) for f in fields(TrainConfig)}
    model_defaults = base.model.to_dict()

    train_values, model_values = {}, {}
    for key, raw in values.items():
        key = _canonical_key(key, train_defaults, model_defaults)
        if key.startswith(MODEL_PREFIX):
            name = key[len(MODEL_PREFIX):]
            model_values[name] = _coerce(key, raw, model_defaults[name])
        else:
            train_values[key] = _coerce(key, raw, train_defaults[key])

    return TrainConfig(model=ModelConfig(**{**model_defaults, **model_values}), **train_values)


def load_train_config(path: Optional[str] = None, overrides: Iterable[str] = ()) -> TrainConfig:
    """
    Read a config file and apply key=value overrides

    Args:
        path: Flat key = value file, or None for defaults
        overrides: Strings of the form key=value, applied after the file

    Returns:
        Validated TrainConfig
    """
    values: Dict[str, Optional[str]] = {}
    if path:
        if not os.path.isfile(path):
            raise ConfigError(f"config file not found: {path}")
        values.update(dotenv_values(path))
    values.update(parse_overrides(overrides))
    return build_train_config(values).validate()
