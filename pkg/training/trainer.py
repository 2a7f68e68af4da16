"""Language-model training and evaluation loops"""

import math
import os
import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from autodiff.tensor import cross_entropy, no_grad
from config import Config
from errors import DataError, TrainingError
from model.checkpoint import save_checkpoint
from model.transformer import Model
from training.data import load_corpus, make_batches
from training.metrics import MetricsRow, write_metrics_csv
from training.optimizer import Optimizer, build_optimizer
from training.schedule import lr_at
from training.train_config import TrainConfig


@dataclass
class TrainResult:
    model: Model
    rows: List[MetricsRow]
    final_val_loss: float
    metrics_path: str
    checkpoint_path: str
    timings_ms: List[float] = field(default_factory=list)


def train_step(model: Model, optimizer: Optimizer, inputs, targets, lr: float) -> float:
    """One forward/backward/update; returns the loss before the update"""
    optimizer.zero_grad()
    loss = cross_entropy(model(inputs), targets)
    value = float(loss.item())
    if not math.isfinite(value):
        return value
    loss.backward()
    optimizer.step(lr)
    return value


def evaluate(model: Model, batches) -> float:
    """Token-weighted mean cross-entropy over every batch, without touching gradients"""
    total, count = 0.0, 0
    with no_grad():
        for inputs, targets in batches:
            n = int(np.asarray(targets).size)
            total += float(cross_entropy(model(inputs), targets).item()) * n
            count += n
    if count == 0:
        raise DataError("validation split is empty")
    return total / count


def _rng_state(train_batches) -> dict:
    state = train_batches.rng.state()
    state['streams'] = ['init'] + state['streams']
    return state


def _log(row: MetricsRow, ema: float):
    val = '' if row.val_loss is None else f"  val {row.val_loss:.4f}"
    print(f"  step {row.step:>6}  lr {row.lr:.3e}  loss {row.train_loss:.4f}  ema {ema:.4f}{val}")


def train(cfg: TrainConfig, out_dir: str, corpus: Optional[np.ndarray] = None,
          verbose: bool = True) -> TrainResult:
    """
    Train a model from scratch and write metrics and the final checkpoint

    Args:
        cfg: Validated training configuration
        out_dir: Directory for metrics.csv and checkpoints
        corpus: Token ids; read from cfg.data_path when omitted
        verbose: Print one line per logged step

    Returns:
        TrainResult
    """
    cfg.validate()
    os.makedirs(out_dir, exist_ok=True)
    model_cfg = cfg.resolved_model()

    ids = load_corpus(cfg.data_path) if corpus is None else corpus
    train_batches, val_batches = make_batches(ids, cfg.seq_len, cfg.batch_size,
                                              cfg.split_fraction, cfg.seed)
    model = Model(model_cfg)
    optimizer = build_optimizer(cfg, model.parameters())

    metrics_path = os.path.join(out_dir, Config.METRICS_NAME)
    rows, timings = [], []
    tokens_seen, ema = 0, None
    started = time.perf_counter()

    if verbose:
        print(f"Training {model_cfg.mode}: {model.num_parameters():,} parameters, {cfg.steps} steps")

    batches = iter(train_batches)
    for step in range(1, cfg.steps + 1):
        inputs, targets = next(batches)
        lr = lr_at(step, cfg)
        loss = train_step(model, optimizer, inputs, targets, lr)
        if not math.isfinite(loss):
            abort_path = save_checkpoint(model, os.path.join(out_dir, Config.ABORT_CHECKPOINT_NAME),
                                         rng_state=_rng_state(train_batches))
            write_metrics_csv(rows, metrics_path)
            raise TrainingError(f"non-finite loss {loss} at step {step}", step, abort_path)

        tokens_seen += int(np.asarray(targets).size)
        ema = loss if ema is None else (1.0 - Config.EMA_ALPHA) * ema + Config.EMA_ALPHA * loss

        if step % cfg.log_every == 0:
            elapsed = (time.perf_counter() - started) * 1000.0
            timings.append(elapsed)
            val_loss = evaluate(model, val_batches) if step % cfg.eval_every == 0 else None
            row = MetricsRow(step=step, lr=lr, train_loss=loss, val_loss=val_loss,
                             tokens_seen=tokens_seen,
                             wall_ms=elapsed if cfg.record_wall_time else None)
            rows.append(row)
            if verbose:
                _log(row, ema)

    if rows and rows[-1].step == cfg.steps and rows[-1].val_loss is not None:
        final_val = rows[-1].val_loss
    else:
        final_val = evaluate(model, val_batches)

    write_metrics_csv(rows, metrics_path)
    checkpoint_path = save_checkpoint(model, os.path.join(out_dir, Config.CHECKPOINT_NAME),
                                      rng_state=_rng_state(train_batches))
    if verbose:
        print(f"✓ final val loss {final_val:.4f} (perplexity {math.exp(final_val):.2f})")

    return TrainResult(model=model, rows=rows, final_val_loss=final_val,
                       metrics_path=metrics_path, checkpoint_path=checkpoint_path,
                       timings_ms=timings)
