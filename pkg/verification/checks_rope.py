import math

import numpy as np

from layers.block_linear import to_complex
from rope.constructions import build_shift_construction, crope_membership_check, reflection_targets, shift_scores
from rope.rotary import RopeConfig, apply_rotation_real, rotation_matrix
from rope.scores import (delta_kernel, delta_margin, score_abs_pe, score_complex, score_rope,
                         sinusoidal_table, token_comparison_bound, token_comparison_score,
                         low_frequency_projection)
from verification.registry import at_least, check, holds, within

MODULE = 'rope-math'
QUERY_POSITIONS = range(8, 25)


def _random_case(generator):
    cfg = RopeConfig(int(2 * generator.integers(1, 33)))
    q = generator.normal(size=cfg.head_dim)
    k = generator.normal(size=cfg.head_dim)
    m, n = (int(p) for p in generator.integers(0, 512, size=2))
    return cfg, q, k, m, n


@check(MODULE, 'rope_score_depends_on_offset_only', seed=20)
def relative_position(generator):
    worst = 0.0
    for _ in range(1000):
        cfg, q, k, m, n = _random_case(generator)
        s = int(generator.integers(-200, 200))
        worst = max(worst, abs(score_rope(q, k, m, n, cfg) - score_rope(q, k, m + s, n + s, cfg)))
    return within(worst, 1e-10)


@check(MODULE, 'complex_score_equals_real_score', seed=21)
def real_complex_identity(generator):
    worst = 0.0
    for _ in range(1000):
        cfg, q, k, m, n = _random_case(generator)
        worst = max(worst, abs(score_complex(to_complex(q), to_complex(k), m, n, cfg)
                               - score_rope(q, k, m, n, cfg)))
    return within(worst, 1e-10, "1000 random q, k, m, n")


@check(MODULE, 'rotations_compose_by_offset', seed=22)
def rotation_composition(generator):
    cfg = RopeConfig(16)
    worst = 0.0
    for m, n in generator.integers(0, 256, size=(50, 2)):
        composed = rotation_matrix(m, cfg).T @ rotation_matrix(n, cfg)
        worst = max(worst, np.abs(composed - rotation_matrix(n - m, cfg)).max())
    return within(worst, 1e-12)


@check(MODULE, 'rotation_preserves_norm', seed=23)
def rotation_isometry(generator):
    worst = 0.0
    for _ in range(200):
        cfg, v, _, m, _ = _random_case(generator)
        worst = max(worst, abs(np.linalg.norm(apply_rotation_real(v, m, cfg)) - np.linalg.norm(v)))
    quarter = apply_rotation_real([1.0, 0.0], 1, RopeConfig.from_freqs([math.pi / 2]))
    worst = max(worst, np.abs(quarter - [0.0, 1.0]).max())
    return within(worst, 1e-12)


@check(MODULE, 'delta_kernel_is_normalized_and_even')
def delta_kernel_normalization(generator):
    for dim in (16, 64, 256):
        cfg = RopeConfig(dim)
        if delta_kernel(cfg, 0) != 1.0:
            return holds(False, f"D={dim}: kernel(0) = {delta_kernel(cfg, 0)!r}")
        offsets = np.arange(1, 65)
        if not np.array_equal(delta_kernel(cfg, offsets), delta_kernel(cfg, -offsets)):
            return holds(False, f"D={dim}: kernel is not even")
    return holds(True)


@check(MODULE, 'delta_attention_sharpens_with_dimension')
def delta_margin_grows(generator):
    margins = [delta_margin(RopeConfig(dim), window=32) for dim in (16, 64, 256)]
    detail = ', '.join(f"D={d}: {m:.4f}" for d, m in zip((16, 64, 256), margins))
    return holds(margins[0] < margins[1] < margins[2], f"peak-to-off-peak margin {detail}")


@check(MODULE, 'absolute_pe_concentrates_at_zero_offset')
def abs_pe_concentration(generator):
    identity = np.eye(64)
    cfg = RopeConfig(64)
    table = sinusoidal_table(40, cfg)
    zero = np.zeros(64)
    for m in (8, 16, 24):
        row = [score_abs_pe(zero, zero, m, n, table, identity, identity) for n in range(40)]
        if int(np.argmax(row)) != m:
            return holds(False, f"p_{m} . p_n peaks at n = {int(np.argmax(row))}")
        kernel = np.array(row) / (cfg.head_dim / 2)
        expected = delta_kernel(cfg, m - np.arange(40))
        if np.abs(kernel - expected).max() > 1e-12:
            return holds(False, "normalized p_m . p_n differs from the cosine kernel")
    return holds(True)


@check(MODULE, 'shift_construction_peaks_at_m_plus_s')
def shift_argmax(generator):
    cfg = RopeConfig(64)
    for s in (1, 2):
        scores = shift_scores(cfg, s, window=32)
        for m in QUERY_POSITIONS:
            peak = int(np.argmax(scores[m - 1])) + 1
            if peak != m + s:
                return holds(False, f"s={s}, m={m}: argmax at n={peak}")
    return holds(True, "D=64, window 32, m in [8, 24]")


@check(MODULE, 'backward_construction_peaks_at_m_minus_s')
def shift_backward(generator):
    cfg = RopeConfig(64)
    for s in (1, 2):
        construction = build_shift_construction(cfg, s, direction='backward')
        expected = np.empty(cfg.head_dim)
        expected[0::2] = np.cos(s * cfg.freqs)
        expected[1::2] = -np.sin(s * cfg.freqs)
        if np.abs(construction.query_real - expected).max() > 1e-15:
            return holds(False, f"s={s}: real query is not (cos s theta, -sin s theta)")
        scores = shift_scores(cfg, s, window=32, direction='backward')
        for m in QUERY_POSITIONS:
            peak = int(np.argmax(scores[m - 1])) + 1
            if peak != m - s:
                return holds(False, f"s={s}, m={m}: argmax at n={peak}")
    return holds(True)


@check(MODULE, 'shift_solution_is_complex_linear')
def membership_shift(generator):
    construction = build_shift_construction(RopeConfig(64), 1)
    result = crope_membership_check(construction.targets, construction.inputs)
    return within(result.residual, 1e-10)


@check(MODULE, 'reflection_is_not_complex_linear')
def membership_reflection(generator):
    targets, inputs = reflection_targets()
    return at_least(crope_membership_check(targets, inputs).residual, 0.1,
                    "unit-norm targets of z -> conj(z)")


@check(MODULE, 'slow_pairs_compare_tokens_position_free', seed=24)
def token_comparison(generator):
    cfg = RopeConfig(64)
    window = 32
    bound = token_comparison_bound(cfg, window)
    worst = 0.0
    for _ in range(200):
        x_m, x_n = generator.normal(size=(2, cfg.head_dim))
        m, n = (int(p) for p in generator.integers(0, window, size=2))
        a = low_frequency_projection(x_m, cfg, window)
        b = low_frequency_projection(x_n, cfg, window)
        deviation = abs(token_comparison_score(x_m, x_n, m, n, cfg, window) - a @ b)
        worst = max(worst, deviation / (np.linalg.norm(a) * np.linalg.norm(b)))
    return within(worst, bound, "relative deviation from the plain inner product")
