"""
Rotary position rotation.

Coordinates (v[2t], v[2t+1]) form pair t, rotated by m * theta_t at position m.
Read as a complex number v[2t] + i v[2t+1], the rotation is multiplication by
exp(i m theta_t).
"""

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from autodiff.tensor import Tensor, stack
from errors import ConfigError, ShapeError

DEFAULT_BASE = 5000.0


@dataclass
class RopeConfig:
    head_dim: int
    base: float = DEFAULT_BASE
    freqs: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.head_dim <= 0 or self.head_dim % 2:
            raise ConfigError(f"rotary head_dim must be a positive even integer, got {self.head_dim}")
        if self.base <= 0:
            raise ConfigError(f"rotary base must be positive, got {self.base}")
        if self.freqs is None:
            t = np.arange(self.head_dim // 2, dtype=np.float64)
            self.freqs = self.base ** (-2.0 * t / self.head_dim)
        else:
            self.freqs = np.asarray(self.freqs, dtype=np.float64)
            if self.freqs.shape != (self.head_dim // 2,):
                raise ConfigError(f"expected {self.head_dim // 2} frequencies, got {self.freqs.shape}")

    @classmethod
    def from_freqs(cls, freqs: Sequence[float]) -> 'RopeConfig':
        """Config with an explicit frequency table instead of the base schedule"""
        freqs = np.asarray(freqs, dtype=np.float64)
        return cls(head_dim=2 * len(freqs), freqs=freqs)

    @property
    def n_pairs(self) -> int:
        return self.head_dim // 2


def rotation_tables(positions, cfg: RopeConfig):
    """cos and sin of position * theta, shape [..., D/2], float64"""
    angles = np.multiply.outer(np.asarray(positions, dtype=np.float64), cfg.freqs)
    return np.cos(angles), np.sin(angles)


def _check_dim(v: np.ndarray, cfg: RopeConfig):
    if v.shape[-1] != cfg.head_dim:
        raise ShapeError(f"rotary config expects dimension {cfg.head_dim}, got shape {v.shape}")


def apply_rotation_real(v, m, cfg: RopeConfig) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    _check_dim(v, cfg)
    cos, sin = rotation_tables(m, cfg)
    x0, x1 = v[..., 0::2], v[..., 1::2]
    out = np.empty_like(v)
    out[..., 0::2] = x0 * cos - x1 * sin
    out[..., 1::2] = x0 * sin + x1 * cos
    return out


def rotation_matrix(m, cfg: RopeConfig) -> np.ndarray:
    """Block-diagonal D x D matrix R_m"""
    cos, sin = rotation_tables(m, cfg)
    r = np.zeros((cfg.head_dim, cfg.head_dim))
    for t in range(cfg.n_pairs):
        i = 2 * t
        r[i, i], r[i, i + 1] = cos[t], -sin[t]
        r[i + 1, i], r[i + 1, i + 1] = sin[t], cos[t]
    return r


def rotate(x: Tensor, positions, cfg: RopeConfig) -> Tensor:
    """
    Differentiable rotation of x [..., T, D] by per-row positions [T]

    Args:
        x: Queries or keys, positions along the second-to-last axis
        positions: One position per row of x
        cfg: Rotary frequencies

    Returns:
        Rotated tensor, same shape and dtype as x
    """
    _check_dim(x.data, cfg)
    cos, sin = rotation_tables(positions, cfg)
    cos = cos.astype(x.dtype)
    sin = sin.astype(x.dtype)
    x0 = x[..., 0::2]
    x1 = x[..., 1::2]
    even = x0 * cos - x1 * sin
    odd = x0 * sin + x1 * cos
    return stack([even, odd], axis=-1).reshape(x.shape)
