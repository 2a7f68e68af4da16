import numpy as np
import numpy.testing as npt
import pytest

from autodiff.gradcheck import check_param, grad_check
from autodiff.tensor import tensor
from errors import ConfigError, ConstructionError, ShapeError
from layers.block_linear import to_real
from rope.constructions import (build_shift_construction, crope_membership_check,
                                reflection_targets, shift_attention_profile, shift_scores)
from rope.rotary import RopeConfig, apply_rotation_real, rotate, rotation_matrix
from rope.scores import (delta_kernel, delta_margin, low_frequency_pairs, score_abs_pe,
                         score_complex, score_complex_real, score_rope, sinusoidal_table,
                         token_comparison_bound, token_comparison_score)


@pytest.fixture
def cfg():
    return RopeConfig(16)


class TestRotation:
    def test_frequency_schedule(self):
        cfg = RopeConfig(8, base=5000.0)
        npt.assert_allclose(cfg.freqs, 5000.0 ** (-np.arange(4) / 4.0))
        assert cfg.freqs[0] == 1.0

    @pytest.mark.parametrize('head_dim', [0, 3, -2])
    def test_bad_head_dim(self, head_dim):
        with pytest.raises(ConfigError):
            RopeConfig(head_dim)

    def test_rotation_is_an_isometry(self, cfg, rng):
        v = rng.normal(size=16)
        for m in (0, 1, 17, 1000):
            npt.assert_allclose(np.linalg.norm(apply_rotation_real(v, m, cfg)), np.linalg.norm(v))

    def test_rotations_compose(self, cfg):
        npt.assert_allclose(rotation_matrix(3, cfg) @ rotation_matrix(5, cfg),
                            rotation_matrix(8, cfg), atol=1e-12)

    def test_position_zero_is_identity(self, cfg, rng):
        v = rng.normal(size=16)
        npt.assert_allclose(apply_rotation_real(v, 0, cfg), v)

    def test_dimension_checked(self, cfg):
        with pytest.raises(ShapeError):
            apply_rotation_real(np.zeros(8), 1, cfg)

    def test_tensor_rotation_matches_array_rotation(self, cfg, rng):
        x = rng.normal(size=(2, 5, 16))
        positions = np.arange(5) + 3
        expected = np.stack([apply_rotation_real(x[:, t], positions[t], cfg) for t in range(5)], axis=1)
        npt.assert_allclose(rotate(tensor(x), positions, cfg).data, expected, atol=1e-12)

    def test_tensor_rotation_gradient(self, cfg, rng):
        x = check_param('x', rng.normal(size=(3, 16)))
        weights = rng.normal(size=(3, 16))
        assert grad_check(lambda: (rotate(x, np.arange(3), cfg) * weights).sum(), [x]) < 1e-6


class TestScores:
    def test_score_depends_only_on_offset(self, cfg, rng):
        q, k = rng.normal(size=16), rng.normal(size=16)
        base = score_rope(q, k, 7, 3, cfg)
        for shift in (1, 50, 977):
            assert score_rope(q, k, 7 + shift, 3 + shift, cfg) == pytest.approx(base, abs=1e-9)

    def test_real_and_complex_forms_agree(self, cfg, rng):
        q, k = rng.normal(size=16), rng.normal(size=16)
        for m, n in ((0, 0), (4, 9), (31, 2)):
            assert score_complex_real(q, k, m, n, cfg) == pytest.approx(score_rope(q, k, m, n, cfg), abs=1e-9)

    def test_complex_length_checked(self, cfg):
        with pytest.raises(ValueError):
            score_complex(np.ones(3), np.ones(8), 0, 0, cfg)

    def test_delta_kernel_peak_and_symmetry(self):
        cfg = RopeConfig(64)
        assert delta_kernel(cfg, 0) == pytest.approx(1.0)
        offsets = np.arange(1, 33)
        npt.assert_allclose(delta_kernel(cfg, offsets), delta_kernel(cfg, -offsets))
        assert np.all(delta_kernel(cfg, offsets) < 1.0)

    def test_delta_margin_grows_with_dimension(self):
        margins = [delta_margin(RopeConfig(d), 32) for d in (16, 64, 256)]
        assert margins[0] < margins[1] < margins[2]

    def test_sinusoidal_table_layout(self, cfg):
        table = sinusoidal_table(4, cfg)
        npt.assert_allclose(table[0, 0::2], 0.0)
        npt.assert_allclose(table[0, 1::2], 1.0)
        npt.assert_allclose(table[2, 0], np.sin(2.0))

    def test_absolute_scores_depend_on_absolute_position(self, cfg, rng):
        pe = sinusoidal_table(64, cfg)
        x_m, x_n = rng.normal(size=16), rng.normal(size=16)
        w = np.eye(16)
        first = score_abs_pe(x_m, x_n, 5, 2, pe, w, w)
        moved = score_abs_pe(x_m, x_n, 45, 42, pe, w, w)
        assert abs(first - moved) > 1e-6

    def test_token_comparison_is_nearly_position_free(self, rng):
        cfg = RopeConfig(64, base=10000.0)
        window = 16
        assert low_frequency_pairs(cfg, window).size > 0
        x = rng.normal(size=64)
        reference = token_comparison_score(x, x, 0, 0, cfg, window)
        bound = token_comparison_bound(cfg, window)
        for m, n in ((0, 15), (15, 0), (7, 3)):
            score = token_comparison_score(x, x, m, n, cfg, window)
            assert abs(score - reference) <= bound * reference + 1e-12


class TestShiftConstruction:
    @pytest.mark.parametrize('s', [1, 2])
    def test_forward_profile_peaks_at_target(self, s):
        cfg = RopeConfig(64)
        scores = shift_scores(cfg, s, window=32)
        for m in range(1, 33 - s):
            assert int(np.argmax(scores[m - 1])) + 1 == m + s

    @pytest.mark.parametrize('s', [1, 2])
    def test_backward_profile_peaks_behind(self, s):
        cfg = RopeConfig(64)
        scores = shift_scores(cfg, s, window=32, direction='backward')
        for m in range(1 + s, 33):
            assert int(np.argmax(scores[m - 1])) + 1 == m - s

    def test_peak_score_equals_pair_count(self):
        cfg = RopeConfig(64)
        c = build_shift_construction(cfg, 1)
        assert score_complex(c.query, c.key, 10, 11, cfg) == pytest.approx(cfg.n_pairs)

    def test_profile_rows_are_distributions(self):
        profile = shift_attention_profile(RopeConfig(32), 2, window=16)
        npt.assert_allclose(profile.sum(axis=-1), 1.0, atol=1e-12)

    def test_queries_come_from_one_complex_matrix(self):
        cfg = RopeConfig(8)
        c = build_shift_construction(cfg, 1, a=[1.0, 2.0], a_alt=[0.5, 2.5])
        result = crope_membership_check(c.targets, c.inputs)
        assert result.residual < 1e-12
        assert not result.rank_deficient
        npt.assert_allclose(c.query_real, to_real(c.query))

    def test_reflection_has_no_complex_matrix(self):
        targets, inputs = reflection_targets()
        assert crope_membership_check(targets, inputs).residual > 0.5

    def test_preconditions(self):
        with pytest.raises(ConstructionError):
            build_shift_construction(RopeConfig(16), 3)
        with pytest.raises(ConstructionError):
            build_shift_construction(RopeConfig(6), 1)
        with pytest.raises(ConstructionError):
            build_shift_construction(RopeConfig(8), 1, a=[1.0, -1.0])
        with pytest.raises(ConstructionError):
            build_shift_construction(RopeConfig(8), 1, a=[1.0, 1.0], a_alt=[1.0, 2.0])
        with pytest.raises(ConstructionError):
            build_shift_construction(RopeConfig(8), 1, a=[1.0, 1.0, 1.0])

    def test_construction_error_is_a_config_error(self):
        with pytest.raises(ConfigError):
            build_shift_construction(RopeConfig(16), 1, direction='sideways')
