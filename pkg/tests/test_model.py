import json
import re

import numpy as np
import numpy.testing as npt
import pytest

from autodiff.gradcheck import grad_check
from autodiff.tensor import cross_entropy, no_grad
from errors import AuditError, CheckpointError, ConfigError, ShapeError
from model.audit import (audit_table, closed_form_counts, format_audit_table, param_audit,
                         read_audit_csv, write_audit_csv)
from model.checkpoint import MAGIC, check_compatible, load_checkpoint, read_manifest, save_checkpoint
from model.modes import MODES, ModelConfig
from model.transformer import Model, attention_map, attention_scores, untied_copy
from verification.checks_model import conditioned_model


def tiny(mode='none', **overrides):
    values = dict(n_layers=1, n_heads=2, d_model=16, d_ff=32, vocab_size=11, max_seq_len=12,
                  mode=mode, seed=0, dtype='float64')
    values.update(overrides)
    return ModelConfig(**values)


class TestModelConfig:
    def test_desk_defaults(self):
        cfg = ModelConfig()
        assert (cfg.n_layers, cfg.n_heads, cfg.d_model, cfg.d_ff) == (2, 4, 128, 256)
        assert cfg.rope_base == 5000.0

    def test_full_architecture(self):
        cfg = ModelConfig.full()
        assert (cfg.n_layers, cfg.n_heads, cfg.d_model, cfg.max_seq_len) == (16, 8, 1024, 512)

    @pytest.mark.parametrize('overrides,message', [
        ({'mode': 'crope_q'}, 'unknown mode'),
        ({'d_model': 18, 'n_heads': 4}, 'divisible'),
        ({'d_model': 12, 'n_heads': 4}, 'even'),
        ({'mode': 'half_rope_qk', 'd_model': 8, 'n_heads': 4}, 'half_rope_qk'),
        ({'dtype': 'float16'}, 'dtype'),
    ])
    def test_invalid_configs(self, overrides, message):
        with pytest.raises(ConfigError, match=message):
            tiny(**overrides).validate()

    def test_from_dict_rejects_unknown_keys(self):
        with pytest.raises(ConfigError, match='heads'):
            ModelConfig.from_dict({'heads': 4})

    def test_half_widths(self):
        cfg = tiny('half_rope_all', d_model=32, n_heads=2)
        assert (cfg.qk_width, cfg.v_width, cfg.qk_head_dim, cfg.head_dim) == (16, 16, 8, 16)


class TestForward:
    @pytest.mark.parametrize('mode', MODES)
    def test_logits_shape(self, mode, rng):
        model = Model(tiny(mode))
        tokens = rng.integers(0, 11, size=(3, 7))
        assert model(tokens).shape == (3, 7, 11)
        assert model(tokens[0]).shape == (7, 11)

    def test_same_seed_same_weights(self):
        assert Model(tiny('crope_qk')).checksum() == Model(tiny('crope_qk')).checksum()
        assert Model(tiny('crope_qk')).checksum() != Model(tiny('crope_qk', seed=1)).checksum()

    def test_too_long_sequence(self):
        with pytest.raises(ShapeError, match='max_seq_len'):
            Model(tiny())(np.zeros((1, 13), dtype=int))

    def test_unknown_token(self):
        with pytest.raises(IndexError):
            Model(tiny())(np.array([[1, 11]]))

    def test_causal_prefix(self, rng):
        model = Model(tiny('crope_all'))
        tokens = rng.integers(0, 11, size=(1, 10))
        changed = tokens.copy()
        changed[0, 6:] = (changed[0, 6:] + 1) % 11
        with no_grad():
            npt.assert_allclose(model(changed).data[0, :6], model(tokens).data[0, :6], atol=1e-12)

    def test_attention_rows(self, rng):
        model = Model(tiny('crope_qkv'))
        weights = attention_map(model, rng.integers(0, 11, size=9), 0, 1)
        npt.assert_allclose(weights.sum(axis=-1), 1.0, atol=1e-12)
        npt.assert_array_equal(np.triu(weights, 1), 0.0)
        npt.assert_array_equal(attention_map(model, [4], 0, 0), [[1.0]])

    def test_scores_shift_with_positions(self, rng):
        model = Model(tiny('crope_qk', max_seq_len=32))
        tokens = rng.integers(0, 11, size=8)
        plain = attention_scores(model, tokens, 0, 0)
        shifted = attention_scores(model, tokens, 0, 0, positions=np.arange(8) + 20)
        npt.assert_allclose(plain, shifted, atol=1e-9)

    def test_capture_index_checked(self):
        with pytest.raises(IndexError):
            attention_map(Model(tiny()), [1, 2], 0, 5)

    @pytest.mark.parametrize('mode', ['crope_qk', 'crope_qkv', 'crope_all'])
    def test_dense_twin_is_bitwise_equal(self, mode, rng):
        model = Model(tiny(mode))
        tokens = rng.integers(0, 11, size=(2, 6))
        with no_grad():
            npt.assert_array_equal(untied_copy(model)(tokens).data, model(tokens).data)

    def test_half_modes_have_no_twin(self):
        with pytest.raises(ConfigError):
            untied_copy(Model(tiny('half_rope_qk')))

    @pytest.mark.parametrize('mode', MODES)
    def test_gradients(self, mode, rng):
        model = conditioned_model(mode, rng)
        tokens = rng.integers(0, 11, size=(2, 6))
        targets = rng.integers(0, 11, size=(2, 6))
        error = grad_check(lambda: cross_entropy(model(tokens), targets),
                           dict(model.named_parameters()), h=1e-5, max_entries=16, atol=1e-9)
        assert error < 1e-4


class TestAudit:
    def test_savings_pattern(self):
        rows = audit_table(ModelConfig(n_layers=2, n_heads=4, d_model=64, d_ff=128))
        assert [row.savings_percent for row in rows] == [0.0, 25.0, 37.5, 50.0, 25.0, 50.0]
        by_mode = {row.mode: row for row in rows}
        assert by_mode['crope_qk'].total == by_mode['half_rope_qk'].total
        assert by_mode['crope_all'].total == by_mode['half_rope_all'].total

    def test_tiny_attention_count(self):
        assert param_audit(ModelConfig(n_layers=1, n_heads=2, d_model=8, d_ff=16,
                                       mode='crope_qkv')).attention == 160

    def test_full_counts_per_layer(self):
        cfg = ModelConfig.full()
        assert closed_form_counts(cfg)['attention'] == 16 * 4_194_304
        assert closed_form_counts(cfg.with_mode('crope_all'))['attention'] == 16 * 2_097_152

    def test_norm_count(self):
        cfg = ModelConfig(n_layers=3, n_heads=4, d_model=32, d_ff=64)
        assert closed_form_counts(cfg)['norms'] == 3 * (2 * 32 + 2 * 4) + 32

    def test_csv_round_trip(self, tmp_path):
        rows = audit_table(ModelConfig(n_layers=1, n_heads=2, d_model=16, d_ff=32))
        path = str(tmp_path / 'audit.csv')
        write_audit_csv(rows, path)
        assert read_audit_csv(path) == [row.as_row() for row in rows]
        assert 'crope_qkv' in format_audit_table(rows)

    def test_invalid_width_is_reported(self):
        with pytest.raises(ConfigError):
            audit_table(ModelConfig(n_layers=1, n_heads=4, d_model=8, d_ff=16))

    def test_audit_error_is_distinct(self):
        assert not issubclass(AuditError, ConfigError)


class TestCheckpoint:
    def test_round_trip_is_bitwise(self, tmp_path, rng):
        model = Model(tiny('crope_all', dtype='float32'))
        path = save_checkpoint(model, str(tmp_path / 'model.ckpt'), rng_state={'seed': 0})
        restored = load_checkpoint(path, expected=model.cfg)
        tokens = rng.integers(0, 11, size=(2, 5))
        with no_grad():
            npt.assert_array_equal(restored(tokens).data, model(tokens).data)
        assert restored.checksum() == model.checksum()
        assert read_manifest(path)['rng_state'] == {'seed': 0}

    def test_file_layout(self, tmp_path):
        path = save_checkpoint(Model(tiny(dtype='float32')), str(tmp_path / 'a.ckpt'))
        with open(path, 'rb') as f:
            assert f.read(len(MAGIC)) == MAGIC
        manifest = read_manifest(path)
        assert manifest['qk_norm_placement'] == 'before_rotation'
        assert all(entry['precision'] == 'float32' for entry in manifest['tensors'])

    def test_mode_mismatch(self, tmp_path):
        path = save_checkpoint(Model(tiny('crope_qk')), str(tmp_path / 'a.ckpt'))
        with pytest.raises(CheckpointError, match='mode mismatch'):
            load_checkpoint(path, expected=tiny('half_rope_qk'))

    def test_architecture_mismatch_ignores_seed(self):
        check_compatible(tiny(seed=0), tiny(seed=5))
        with pytest.raises(CheckpointError, match='d_ff'):
            check_compatible(tiny(), tiny(d_ff=64))

    def test_truncated_payload(self, tmp_path):
        path = save_checkpoint(Model(tiny()), str(tmp_path / 'a.ckpt'))
        with open(path, 'rb') as f:
            blob = f.read()
        with open(path, 'wb') as f:
            f.write(blob[:-8])
        with pytest.raises(CheckpointError, match='truncated'):
            load_checkpoint(path)

    def test_not_a_checkpoint(self, tmp_path):
        path = tmp_path / 'junk.ckpt'
        path.write_bytes(b'hello\n')
        with pytest.raises(CheckpointError, match='magic'):
            load_checkpoint(str(path))

    @staticmethod
    def rewrite_manifest(path, edit):
        with open(path, 'rb') as f:
            magic, manifest, payload = f.read().split(b'\n', 2)
        manifest = json.loads(manifest)
        edit(manifest['tensors'])
        with open(path, 'wb') as f:
            f.write(magic + b'\n' + json.dumps(manifest, sort_keys=True).encode('utf-8') + b'\n' + payload)

    def test_missing_tensor_is_named(self, tmp_path):
        path = save_checkpoint(Model(tiny()), str(tmp_path / 'a.ckpt'))
        dropped = read_manifest(path)['tensors'][-1]['name']
        self.rewrite_manifest(path, lambda tensors: tensors.pop())
        with pytest.raises(CheckpointError, match=f'missing tensor {re.escape(dropped)}'):
            load_checkpoint(path)

    def test_unexpected_tensor_is_named(self, tmp_path):
        path = save_checkpoint(Model(tiny()), str(tmp_path / 'a.ckpt'))
        self.rewrite_manifest(path, lambda tensors: tensors.append(dict(tensors[0], name='blocks.9.extra')))
        with pytest.raises(CheckpointError, match=r'unexpected tensor blocks\.9\.extra'):
            load_checkpoint(path)
