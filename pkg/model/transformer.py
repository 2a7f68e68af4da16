"""
Pre-norm decoder transformer with rotary attention.

The Q/K/V/out projections are BlockLinear layers whose tied flags and widths
come from the placement mode. Each head normalizes its queries and keys (RMS
over the head, one learnable scalar gain per head), rotates them by position,
and attends with scaled dot products.
"""

import math
from typing import Optional

import numpy as np

from autodiff.rng import Rng
from autodiff.tensor import MASK_VALUE, Parameter, Tensor, no_grad, softmax_rows, where
from errors import CheckpointError, ConfigError, ShapeError
from layers.block_linear import BlockLinear, untied_blocks
from layers.module import Module
from layers.standard import Embedding, RmsNorm, SwigluFfn, rms_normalize
from model.modes import ModelConfig
from rope.rotary import RopeConfig, rotate


class Attention(Module):
    def __init__(self, cfg: ModelConfig, generator=None, dtype=None):
        tie_q, tie_k, tie_v, tie_o = cfg.ties
        self.n_heads = cfg.n_heads
        self.qk_head_dim = cfg.qk_head_dim
        self.v_head_dim = cfg.v_head_dim
        self.causal = cfg.causal

        self.wq = BlockLinear(cfg.d_model, cfg.qk_width, tie_q, generator, dtype)
        self.wk = BlockLinear(cfg.d_model, cfg.qk_width, tie_k, generator, dtype)
        self.wv = BlockLinear(cfg.d_model, cfg.v_width, tie_v, generator, dtype)
        self.wo = BlockLinear(cfg.v_width, cfg.d_model, tie_o, generator, dtype)
        self.q_gain = Parameter(np.ones(cfg.n_heads), dtype=dtype)
        self.k_gain = Parameter(np.ones(cfg.n_heads), dtype=dtype)

        self._rope = RopeConfig(cfg.qk_head_dim, cfg.rope_base)

    def _heads(self, x: Tensor, head_dim: int) -> Tensor:
        batch, length, _ = x.shape
        return x.reshape(batch, length, self.n_heads, head_dim).transpose(0, 2, 1, 3)

    def qk_norm(self, x: Tensor, gain: Parameter) -> Tensor:
        return rms_normalize(x) * gain.reshape(1, self.n_heads, 1, 1)

    def __call__(self, x: Tensor, positions: np.ndarray, capture: Optional[dict] = None) -> Tensor:
        batch, length, _ = x.shape

        q = self.qk_norm(self._heads(self.wq(x), self.qk_head_dim), self.q_gain)
        k = self.qk_norm(self._heads(self.wk(x), self.qk_head_dim), self.k_gain)
        v = self._heads(self.wv(x), self.v_head_dim)

        q = rotate(q, positions, self._rope)
        k = rotate(k, positions, self._rope)

        scores = (q @ k.swapaxes(-1, -2)) * (1.0 / math.sqrt(self.qk_head_dim))
        if capture is not None:
            capture['scores'] = scores.data.copy()
        if self.causal:
            scores = where(np.tril(np.ones((length, length), dtype=bool)), scores, MASK_VALUE)
        weights = softmax_rows(scores)
        if capture is not None:
            capture['weights'] = weights.data.copy()

        out = (weights @ v).transpose(0, 2, 1, 3).reshape(batch, length, self.n_heads * self.v_head_dim)
        return self.wo(out)


class DecoderLayer(Module):
    def __init__(self, cfg: ModelConfig, generator=None, dtype=None):
        self.attn_norm = RmsNorm(cfg.d_model, dtype=dtype)
        self.attn = Attention(cfg, generator, dtype)
        self.ffn_norm = RmsNorm(cfg.d_model, dtype=dtype)
        self.ffn = SwigluFfn(cfg.d_model, cfg.d_ff, generator, dtype)

    def __call__(self, x: Tensor, positions: np.ndarray, capture: Optional[dict] = None) -> Tensor:
        h = x + self.attn(self.attn_norm(x), positions, capture)
        return h + self.ffn(self.ffn_norm(h))


class Model(Module):
    """Decoder stack with the token embedding reused as the output projection"""

    def __init__(self, cfg: ModelConfig, initialize: bool = True):
        self.cfg = cfg.validate()
        dtype = np.dtype(cfg.dtype)
        generator = Rng(cfg.seed).generator('init') if initialize else None

        self.embed = Embedding(cfg.vocab_size, cfg.d_model, generator, dtype)
        self.layers = [DecoderLayer(cfg, generator, dtype) for _ in range(cfg.n_layers)]
        self.final_norm = RmsNorm(cfg.d_model, dtype=dtype)
        self.assign_names()

    def __call__(self, tokens, positions=None, capture: Optional[dict] = None) -> Tensor:
        tokens = np.asarray(tokens)
        single = tokens.ndim == 1
        if single:
            tokens = tokens[None, :]
        if tokens.ndim != 2:
            raise ShapeError(f"tokens must be [batch, length], got shape {tokens.shape}")
        length = tokens.shape[1]
        if length > self.cfg.max_seq_len:
            raise ShapeError(f"sequence length {length} exceeds max_seq_len {self.cfg.max_seq_len}")
        positions = np.arange(length) if positions is None else np.asarray(positions)
        if positions.shape != (length,):
            raise ShapeError(f"expected {length} positions, got shape {positions.shape}")

        h = self.embed(tokens)
        for i, layer in enumerate(self.layers):
            layer_capture = None
            if capture is not None:
                layer_capture = capture.setdefault(i, {})
            h = layer(h, positions, layer_capture)
        logits = self.embed.unembed(self.final_norm(h))
        return logits.reshape(length, self.cfg.vocab_size) if single else logits

    def load_state(self, state: dict):
        """Copy arrays into the parameters, matching by name"""
        params = dict(self.named_parameters())
        missing = [name for name in params if name not in state]
        if missing:
            raise CheckpointError(f"missing tensor {missing[0]}")
        for name, p in params.items():
            value = np.asarray(state[name])
            if value.shape != p.shape:
                raise CheckpointError(f"tensor {name}: shape {value.shape}, model expects {p.shape}")
            p.data = np.array(value, dtype=p.dtype)


def build_model(cfg: ModelConfig) -> Model:
    return Model(cfg)


def forward(model: Model, tokens, positions=None) -> Tensor:
    return model(tokens, positions)


def _capture(model: Model, tokens, layer: int, head: int, positions=None) -> dict:
    if not 0 <= layer < model.cfg.n_layers:
        raise IndexError(f"layer {layer} out of range for {model.cfg.n_layers} layers")
    if not 0 <= head < model.cfg.n_heads:
        raise IndexError(f"head {head} out of range for {model.cfg.n_heads} heads")
    tokens = np.asarray(tokens)
    if tokens.ndim == 1:
        tokens = tokens[None, :]
    capture = {}
    with no_grad():
        model(tokens, positions, capture)
    return capture[layer]


def attention_map(model: Model, tokens, layer: int, head: int, positions=None) -> np.ndarray:
    """Post-softmax weights [T, T] of one head for the first sequence in tokens"""
    return _capture(model, tokens, layer, head, positions)['weights'][0, head]


def attention_scores(model: Model, tokens, layer: int, head: int, positions=None) -> np.ndarray:
    """Scaled scores [T, T] before masking"""
    return _capture(model, tokens, layer, head, positions)['scores'][0, head]


def untied_copy(model: Model) -> Model:
    """Dense model of mode 'none' computing exactly what a full-width tied model computes"""
    cfg = model.cfg
    if cfg.qk_width != cfg.d_model or cfg.v_width != cfg.d_model:
        raise ConfigError(f"mode {cfg.mode} has reduced widths and no dense twin")
    twin = Model(cfg.with_mode('none'), initialize=False)
    state = {}
    for name, p in model.named_parameters():
        tied = name.endswith('.blocks') and p.shape[-1] == 2
        state[name] = untied_blocks(p.data) if tied else p.data
    twin.load_state(state)
    return twin
