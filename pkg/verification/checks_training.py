import os
import tempfile

import numpy as np

from autodiff.tensor import cross_entropy, no_grad
from layers.block_linear import BlockLinear, tying_violation
from model.checkpoint import load_checkpoint, save_checkpoint
from model.modes import ModelConfig
from model.transformer import Model
from training.data import detokenize, make_batches, tokenize_bytes
from training.optimizer import AdamW
from training.schedule import lr_at
from training.toy_task import NEXT, NEXTNEXT, ToyTaskSpec, toy_task_generate
from training.train_config import TrainConfig
from training.trainer import evaluate, train_step
from verification.registry import check, fault_active, holds, within

MODULE = 'training'


def _small_model(mode: str, dtype: str = 'float32') -> Model:
    return Model(ModelConfig(n_layers=1, n_heads=2, d_model=16, d_ff=32, vocab_size=256,
                             max_seq_len=16, mode=mode, seed=0, dtype=dtype))


@check(MODULE, 'schedule_endpoints_exact')
def schedule_endpoints(generator):
    cfg = TrainConfig()
    values = (lr_at(0, cfg), lr_at(cfg.warmup_steps, cfg), lr_at(cfg.steps, cfg))
    return holds(values == (0.0, cfg.lr_max, cfg.lr_min), f"lr at 0, warmup end, last step: {values}")


@check(MODULE, 'weight_decay_is_decoupled', seed=40)
def decoupled_decay(generator):
    layer = BlockLinear(4, 4, tied=True, generator=generator)
    before = layer.blocks.data.copy()
    optimizer = AdamW([layer.blocks], weight_decay=0.1)
    layer.blocks.grad = np.zeros_like(before)
    optimizer.step(2e-3)
    return within(np.abs(layer.blocks.data - before * (1.0 - 2e-3 * 0.1)).max(), 0.0)


@check(MODULE, 'byte_tokenizer_round_trip')
def tokenizer(generator):
    text = bytes(generator.integers(0, 256, size=4096, dtype=np.uint8))
    ok = list(tokenize_bytes('AB')) == [65, 66] and detokenize(tokenize_bytes(text)) == text
    return holds(ok)


@check(MODULE, 'batches_partition_and_repeat', seed=41)
def batches(generator):
    ids = generator.integers(0, 256, size=5000)
    train_a, val = make_batches(ids, 15, 4, 0.1, seed=7)
    train_b, _ = make_batches(ids, 15, 4, 0.1, seed=7)
    first_a = [x for _, (x, _) in zip(range(200), train_a)]
    first_b = [x for _, (x, _) in zip(range(200), train_b)]
    if not all(np.array_equal(a, b) for a, b in zip(first_a, first_b)):
        return holds(False, "same seed gave different batch order")
    train_ids = {tuple(w) for w in train_a.windows}
    if any(tuple(w) in train_ids for w in val.windows):
        return holds(False, "a validation window also appears in training")
    split = len(ids) - int(len(ids) * 0.1)
    return holds(train_a.windows.size <= split, "validation ids come from the tail only")


@check(MODULE, 'toy_task_sequences_well_formed', seed=42)
def toy_task_invariants(generator):
    spec = ToyTaskSpec(seed=3)
    data = toy_task_generate(spec, 1000)
    markers = np.isin(data.inputs, (NEXT, NEXTNEXT)).sum(axis=1)
    rows = np.arange(len(data))
    ok = (np.all(markers == 1)
          and np.all(data.targets == data.inputs[rows, data.marker_positions + data.shifts])
          and (data.shifts == 1).sum() == 500)
    return holds(bool(ok), "one marker per sequence, targets at marker + shift, NEXT/NEXTNEXT balanced")


@check(MODULE, 'optimizer_keeps_tied_structure', seed=43)
def optimizer_structure(generator):
    model = _small_model('crope_all', dtype='float64')
    optimizer = AdamW(model.parameters())
    for _ in range(5):
        inputs = generator.integers(0, 256, size=(2, 8))
        targets = generator.integers(0, 256, size=(2, 8))
        train_step(model, optimizer, inputs, targets, 1e-2)
    worst = 0.0
    for layer in model.layers:
        for proj in (layer.attn.wq, layer.attn.wk, layer.attn.wv, layer.attn.wo):
            weight = proj.weight_array()
            if fault_active('tying'):
                weight[1, 0] += 1e-3
            worst = max(worst, tying_violation(weight))
    return within(worst, 0.0, "tying relations on every projection after training steps")


@check(MODULE, 'checkpoint_round_trip_bitwise', seed=44)
def checkpoint_round_trip(generator):
    model = _small_model('crope_qkv')
    tokens = generator.integers(0, 256, size=(2, 12))
    with tempfile.TemporaryDirectory() as tmp:
        path = save_checkpoint(model, os.path.join(tmp, 'model.ckpt'))
        restored = load_checkpoint(path, expected=model.cfg)
    with no_grad():
        same = np.array_equal(model(tokens).data, restored(tokens).data)
    return holds(same, "logits identical after save and load")


@check(MODULE, 'evaluation_is_pure', seed=45)
def eval_purity(generator):
    model = _small_model('crope_qk')
    _, val = make_batches(generator.integers(0, 256, size=4000), 15, 4, 0.5, seed=0)
    before = model.checksum()
    first = evaluate(model, val)
    second = evaluate(model, val.regroup(7))
    if model.checksum() != before:
        return holds(False, "parameters changed during evaluation")
    if any(p.grad is not None for p in model.parameters()):
        return holds(False, "evaluation left gradients behind")
    return within(abs(first - second), 1e-5, "regrouped validation batches")


@check(MODULE, 'untrained_loss_near_uniform', seed=46)
def untrained_loss(generator):
    model = _small_model('none')
    with no_grad():
        loss = cross_entropy(model(generator.integers(0, 256, size=(4, 16))),
                             generator.integers(0, 256, size=(4, 16))).item()
    return within(abs(loss - np.log(256.0)), 0.1)
