import math
from typing import List, Sequence

from errors import ConfigError


def lr_at(step: int, cfg) -> float:
    """Linear warmup from 0 to lr_max, then cosine decay to lr_min at the last step"""
    if not 0 <= step <= cfg.steps:
        raise ConfigError(f"step {step} outside [0, {cfg.steps}]")
    if step <= cfg.warmup_steps and cfg.warmup_steps > 0:
        return cfg.lr_max * (step / cfg.warmup_steps)
    progress = (step - cfg.warmup_steps) / (cfg.steps - cfg.warmup_steps)
    return cfg.lr_min + (cfg.lr_max - cfg.lr_min) * (1.0 + math.cos(math.pi * progress)) / 2.0


def ema_smooth(values: Sequence[float], alpha: float) -> List[float]:
    smoothed, current = [], None
    for value in values:
        current = value if current is None else (1.0 - alpha) * current + alpha * value
        smoothed.append(current)
    return smoothed


def row_alpha(alpha: float, every: int) -> float:
    """Per-row smoothing factor equivalent to a per-step alpha over `every` steps"""
    return 1.0 - (1.0 - alpha) ** every
