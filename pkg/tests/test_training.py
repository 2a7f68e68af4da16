import math
import os

import numpy as np
import numpy.testing as npt
import pytest

from autodiff.tensor import Parameter
from config import Config
from errors import ConfigError, DataError, TrainingError
from model.checkpoint import load_checkpoint
from model.modes import ModelConfig
from model.transformer import Model
from training.data import (detokenize, load_corpus, make_batches, minimum_corpus_size,
                           tokenize_bytes)
from training.metrics import MetricsRow, read_metrics_csv, write_metrics_csv
from training.optimizer import AdamW, build_optimizer
from training.run_manifest import read_run_manifest, utc_now, write_run_manifest
from training.schedule import ema_smooth, lr_at, row_alpha
from training.train_config import TrainConfig, load_train_config, parse_overrides
from training import trainer
from training.trainer import evaluate, train


def smoke_config(corpus_file, **overrides):
    items = [f'data_path={corpus_file}'] + [f'{key}={value}' for key, value in overrides.items()]
    return load_train_config(Config.preset_path('smoke'), items)


class TestConfig:
    def test_defaults_are_desk_scale(self):
        cfg = TrainConfig().validate()
        assert (cfg.steps, cfg.warmup_steps, cfg.lr_max, cfg.lr_min) == (2000, 50, 2e-3, 4e-4)
        assert (cfg.beta1, cfg.beta2, cfg.weight_decay) == (0.9, 0.95, 0.1)

    def test_presets_load(self):
        desk = load_train_config(Config.preset_path('desk'))
        full = load_train_config(Config.preset_path('full'))
        assert desk.model.d_model == 128 and desk.steps == 2000
        assert full.model.n_layers == 16 and full.model.d_model == 1024

    def test_overrides_win(self, tmp_path):
        path = tmp_path / 'run.conf'
        path.write_text('steps = 50\nmodel.mode = crope_qk\n')
        cfg = load_train_config(str(path), ['mode=crope_all', 'steps=10', 'warmup_steps=2'])
        assert cfg.model.mode == 'crope_all'
        assert cfg.steps == 10

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match='unknown config key: learning_rate'):
            load_train_config(None, ['learning_rate=1'])

    def test_bad_value(self):
        with pytest.raises(ConfigError, match='steps'):
            load_train_config(None, ['steps=many'])

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match='not found'):
            load_train_config(str(tmp_path / 'nope.conf'))

    def test_override_syntax(self):
        assert parse_overrides(['a=b=c']) == {'a': 'b=c'}
        with pytest.raises(ConfigError):
            parse_overrides(['steps'])

    @pytest.mark.parametrize('overrides', [
        ['warmup_steps=2000'],
        ['lr_min=1.0'],
        ['eval_every=15', 'log_every=10'],
        ['seq_len=512'],
        ['optimizer=sgd'],
    ])
    def test_invalid_training_values(self, overrides):
        with pytest.raises(ConfigError):
            load_train_config(None, overrides)

    def test_run_seed_wins(self):
        cfg = load_train_config(None, ['seed=4', 'model.seed=1'])
        assert cfg.resolved_model().seed == 4


class TestSchedule:
    def test_endpoints(self):
        cfg = TrainConfig()
        assert lr_at(0, cfg) == 0.0
        assert lr_at(cfg.warmup_steps, cfg) == cfg.lr_max
        assert lr_at(cfg.steps, cfg) == cfg.lr_min

    def test_monotone_after_warmup(self):
        cfg = TrainConfig()
        values = [lr_at(step, cfg) for step in range(cfg.warmup_steps, cfg.steps + 1)]
        assert all(a >= b for a, b in zip(values, values[1:]))

    def test_out_of_range(self):
        with pytest.raises(ConfigError):
            lr_at(2001, TrainConfig())

    def test_ema(self):
        assert ema_smooth([1.0, 3.0], 0.5) == [1.0, 2.0]
        assert row_alpha(0.5, 2) == 0.75


class TestOptimizer:
    def test_decay_only_on_matrices(self):
        matrix = Parameter(np.ones((2, 2)))
        gain = Parameter(np.ones(2))
        optimizer = AdamW([matrix, gain], weight_decay=0.1)
        matrix.grad = np.zeros((2, 2))
        gain.grad = np.zeros(2)
        optimizer.step(0.5)
        npt.assert_allclose(matrix.data, 0.95)
        npt.assert_array_equal(gain.data, 1.0)

    def test_first_step_moves_by_lr(self):
        p = Parameter(np.array([[1.0, -1.0]]))
        p.grad = np.array([[3.0, -0.2]])
        AdamW([p], weight_decay=0.0).step(0.01)
        npt.assert_allclose(p.data, [[0.99, -0.99]], rtol=1e-6)

    def test_frozen_parameters_are_skipped(self):
        frozen = Parameter(np.ones(2), trainable=False)
        assert AdamW([frozen]).params == []

    def test_registry(self):
        optimizer = build_optimizer(TrainConfig(), [Parameter(np.ones((2, 2)))])
        assert isinstance(optimizer, AdamW)
        assert optimizer.beta2 == 0.95


class TestData:
    def test_tokenizer(self):
        assert list(tokenize_bytes('hé')) == [104, 195, 169]
        assert detokenize(tokenize_bytes(b'\x00\xff')) == b'\x00\xff'
        with pytest.raises(DataError):
            tokenize_bytes(b'')

    def test_missing_corpus(self, tmp_path):
        with pytest.raises(DataError):
            load_corpus(str(tmp_path / 'absent.txt'))

    def test_windows_and_split(self, rng):
        ids = rng.integers(0, 256, size=2000)
        train_batches, val = make_batches(ids, 9, 4, 0.1, seed=3)
        inputs, targets = next(iter(train_batches))
        assert inputs.shape == targets.shape == (4, 9)
        npt.assert_array_equal(inputs[:, 1:], targets[:, :-1])
        assert val.windows[0, 0] == ids[2000 - 200]
        assert val.n_tokens == len(val.windows) * 9

    def test_same_seed_same_order(self, rng):
        ids = rng.integers(0, 256, size=3000)
        first = [x for _, (x, _) in zip(range(50), make_batches(ids, 9, 4, 0.1, seed=1)[0])]
        again = [x for _, (x, _) in zip(range(50), make_batches(ids, 9, 4, 0.1, seed=1)[0])]
        other = [x for _, (x, _) in zip(range(50), make_batches(ids, 9, 4, 0.1, seed=2)[0])]
        assert all(np.array_equal(a, b) for a, b in zip(first, again))
        assert not all(np.array_equal(a, b) for a, b in zip(first, other))

    def test_too_small_names_the_minimum(self):
        required = minimum_corpus_size(16, 4, 0.1)
        with pytest.raises(DataError, match=str(required)):
            make_batches(np.zeros(required - 1, dtype=int), 16, 4, 0.1, seed=0)
        make_batches(np.zeros(required, dtype=int), 16, 4, 0.1, seed=0)

    def test_evaluate_is_batch_size_independent(self, rng):
        model = Model(ModelConfig(n_layers=1, n_heads=2, d_model=16, d_ff=32, max_seq_len=16,
                                  dtype='float64'))
        _, val = make_batches(rng.integers(0, 256, size=3000), 15, 4, 0.5, seed=0)
        npt.assert_allclose(evaluate(model, val), evaluate(model, val.regroup(3)), rtol=1e-12)


class TestMetrics:
    def test_round_trip(self, tmp_path):
        rows = [MetricsRow(5, 1e-3, 5.5, None, 320), MetricsRow(10, 2e-3, 5.1, 5.3, 640, 12.5)]
        path = str(tmp_path / 'metrics.csv')
        write_metrics_csv(rows, path)
        assert read_metrics_csv(path) == rows

    def test_steps_must_increase(self, tmp_path):
        rows = [MetricsRow(10, 1e-3, 5.0, None, 1), MetricsRow(10, 1e-3, 5.0, None, 2)]
        with pytest.raises(ValueError):
            write_metrics_csv(rows, str(tmp_path / 'metrics.csv'))

    def test_run_manifest(self, tmp_path):
        write_run_manifest(str(tmp_path), 'train', 'complete', {'steps': 1}, ['metrics.csv'], utc_now())
        manifest = read_run_manifest(str(tmp_path))
        assert manifest['status'] == 'complete'
        assert manifest['code_version'] == Config.VERSION
        assert 'optimizer' in manifest['design_flags']
        with pytest.raises(ValueError):
            write_run_manifest(str(tmp_path), 'train', 'done', {}, [], utc_now())


class TestTrain:
    def test_smoke_run(self, corpus_file, tmp_path):
        cfg = smoke_config(corpus_file)
        result = train(cfg, str(tmp_path / 'run'), verbose=False)
        rows = read_metrics_csv(result.metrics_path)
        assert [row.step for row in rows] == [5, 10, 15, 20]
        assert [row.val_loss is not None for row in rows] == [False, True, False, True]
        assert all(row.wall_ms is None for row in rows)
        assert rows[-1].lr == pytest.approx(cfg.lr_min)
        assert math.isfinite(result.final_val_loss)
        assert result.final_val_loss == rows[-1].val_loss

        restored = load_checkpoint(result.checkpoint_path, expected=cfg.resolved_model())
        assert restored.checksum() == result.model.checksum()

    def test_runs_are_reproducible(self, corpus_file, tmp_path):
        cfg = smoke_config(corpus_file, steps=10, eval_every=5)
        first = train(cfg, str(tmp_path / 'a'), verbose=False)
        second = train(cfg, str(tmp_path / 'b'), verbose=False)
        with open(first.metrics_path, 'rb') as f, open(second.metrics_path, 'rb') as g:
            assert f.read() == g.read()
        assert first.model.checksum() == second.model.checksum()

    def test_loss_decreases(self, corpus_file, tmp_path):
        cfg = smoke_config(corpus_file, steps=60, warmup_steps=5, eval_every=10, log_every=10)
        result = train(cfg, str(tmp_path / 'run'), verbose=False)
        assert result.rows[-1].train_loss < result.rows[0].train_loss
        assert os.path.exists(os.path.join(tmp_path, 'run', Config.CHECKPOINT_NAME))

    def test_non_finite_loss_aborts_with_checkpoint(self, corpus_file, tmp_path, monkeypatch):
        real_step = trainer.train_step
        seen = []

        def step_with_nan(*args):
            loss = real_step(*args)
            seen.append(loss)
            return float('nan') if len(seen) == 7 else loss

        monkeypatch.setattr(trainer, 'train_step', step_with_nan)
        run_dir = tmp_path / 'run'
        with pytest.raises(TrainingError, match='at step 7') as excinfo:
            train(smoke_config(corpus_file), str(run_dir), verbose=False)
        assert excinfo.value.step == 7
        assert excinfo.value.checkpoint_path == os.path.join(str(run_dir), Config.ABORT_CHECKPOINT_NAME)
        assert sorted(os.listdir(run_dir)) == [Config.ABORT_CHECKPOINT_NAME, Config.METRICS_NAME]
        assert [row.step for row in read_metrics_csv(str(run_dir / Config.METRICS_NAME))] == [5]
        load_checkpoint(excinfo.value.checkpoint_path)

    def test_zero_learning_rate_leaves_weights(self, corpus_file, tmp_path):
        cfg = smoke_config(corpus_file, steps=5, warmup_steps=1, eval_every=5, lr_max=0, lr_min=0)
        result = train(cfg, str(tmp_path / 'run'), verbose=False)
        assert result.model.checksum() == Model(cfg.resolved_model()).checksum()
