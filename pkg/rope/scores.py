"""Positional attention scorers and the cosine kernel behind them"""

import numpy as np

from layers.block_linear import to_complex
from rope.rotary import RopeConfig, apply_rotation_real


def score_rope(q, k, m, n, cfg: RopeConfig) -> float:
    """(R_m q)^T (R_n k)"""
    return float(apply_rotation_real(q, m, cfg) @ apply_rotation_real(k, n, cfg))


def score_complex(q_c, k_c, m, n, cfg: RopeConfig) -> float:
    """Re sum_t conj(q_t) exp(-i (m - n) theta_t) k_t"""
    q_c = np.asarray(q_c, dtype=np.complex128)
    k_c = np.asarray(k_c, dtype=np.complex128)
    if q_c.shape != (cfg.n_pairs,) or k_c.shape != (cfg.n_pairs,):
        raise ValueError(f"complex vectors must have length {cfg.n_pairs}")
    phase = np.exp(-1j * (m - n) * cfg.freqs)
    return float(np.real(np.sum(np.conj(q_c) * phase * k_c)))


def score_complex_real(q, k, m, n, cfg: RopeConfig) -> float:
    """score_complex on real vectors read in the interleaved layout"""
    return score_complex(to_complex(q), to_complex(k), m, n, cfg)


def sinusoidal_table(n_positions: int, cfg: RopeConfig) -> np.ndarray:
    """Absolute position vectors p_m with (sin m theta_t, cos m theta_t) pairs, rows 0..n-1"""
    angles = np.multiply.outer(np.arange(n_positions, dtype=np.float64), cfg.freqs)
    table = np.empty((n_positions, cfg.head_dim))
    table[:, 0::2] = np.sin(angles)
    table[:, 1::2] = np.cos(angles)
    return table


def score_abs_pe(x_m, x_n, m: int, n: int, pe: np.ndarray, wq, wk) -> float:
    """(x_m + p_m)^T Wq^T Wk (x_n + p_n)"""
    query = np.asarray(wq) @ (np.asarray(x_m, dtype=np.float64) + pe[m])
    key = np.asarray(wk) @ (np.asarray(x_n, dtype=np.float64) + pe[n])
    return float(query @ key)


def delta_kernel(cfg: RopeConfig, delta):
    """(2/D) sum_t cos(delta * theta_t); scalar or array of offsets"""
    values = np.cos(np.multiply.outer(np.asarray(delta, dtype=np.float64), cfg.freqs)).mean(axis=-1)
    return float(values) if np.ndim(values) == 0 else values


def max_off_peak(cfg: RopeConfig, window: int = 32) -> float:
    offsets = np.arange(1, window + 1)
    return float(np.max(delta_kernel(cfg, offsets)))


def delta_margin(cfg: RopeConfig, window: int = 32) -> float:
    """Unnormalized score gap between offset 0 and the best offset in 1..window"""
    return cfg.n_pairs * (1.0 - max_off_peak(cfg, window))


def low_frequency_pairs(cfg: RopeConfig, window: int, ratio: float = 4.0) -> np.ndarray:
    """Pairs whose wavelength 1/theta_t is at least ratio * window"""
    return np.flatnonzero(1.0 / cfg.freqs >= ratio * window)


def low_frequency_projection(x, cfg: RopeConfig, window: int, ratio: float = 4.0) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    keep = np.zeros(cfg.head_dim, dtype=bool)
    pairs = low_frequency_pairs(cfg, window, ratio)
    keep[2 * pairs] = True
    keep[2 * pairs + 1] = True
    return np.where(keep, x, 0.0)


def token_comparison_score(x_m, x_n, m, n, cfg: RopeConfig, window: int, ratio: float = 4.0) -> float:
    """
    RoPE score of two token vectors restricted to the slow pairs.

    Inside the window the slow pairs barely turn, so the score stays close to
    the plain inner product of the restricted vectors whatever m and n are.
    """
    return score_rope(low_frequency_projection(x_m, cfg, window, ratio),
                      low_frequency_projection(x_n, cfg, window, ratio), m, n, cfg)


def token_comparison_bound(cfg: RopeConfig, window: int, ratio: float = 4.0) -> float:
    """Largest rotation angle any slow pair reaches across the window"""
    pairs = low_frequency_pairs(cfg, window, ratio)
    if pairs.size == 0:
        return 0.0
    return float(window * cfg.freqs[pairs].max())
