import numpy as np

from autodiff.tensor import Parameter, Tensor, get_default_dtype, matmul
from errors import ShapeError
from layers.module import Module

RMS_EPS = 1e-6
EMBED_STD = 0.02


class Linear(Module):
    """Dense bias-free projection with weight [out_dim, in_dim]"""

    def __init__(self, in_dim: int, out_dim: int, generator: np.random.Generator = None, dtype=None):
        self.in_dim = in_dim
        self.out_dim = out_dim
        dtype = np.dtype(dtype or get_default_dtype())
        if generator is None:
            data = np.broadcast_to(np.zeros((), dtype=dtype), (out_dim, in_dim))
        else:
            data = generator.normal(0.0, 1.0 / np.sqrt(in_dim), size=(out_dim, in_dim)).astype(dtype)
        self.weight = Parameter(data, dtype=dtype)

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.in_dim:
            raise ShapeError(f"Linear({self.in_dim} -> {self.out_dim}) got last dimension {x.shape[-1]}")
        lead = x.shape[:-1]
        y = matmul(x.reshape(-1, self.in_dim), self.weight.T)
        return y.reshape(*lead, self.out_dim)


class Embedding(Module):
    """Token table, also used transposed as the output projection"""

    def __init__(self, vocab_size: int, dim: int, generator: np.random.Generator = None, dtype=None):
        self.vocab_size = vocab_size
        self.dim = dim
        dtype = np.dtype(dtype or get_default_dtype())
        if generator is None:
            data = np.broadcast_to(np.zeros((), dtype=dtype), (vocab_size, dim))
        else:
            data = generator.normal(0.0, EMBED_STD, size=(vocab_size, dim)).astype(dtype)
        self.weight = Parameter(data, dtype=dtype)

    def __call__(self, tokens) -> Tensor:
        tokens = np.asarray(tokens)
        if tokens.size and (tokens.min() < 0 or tokens.max() >= self.vocab_size):
            bad = tokens[(tokens < 0) | (tokens >= self.vocab_size)][0]
            raise IndexError(f"token id {int(bad)} out of range for vocabulary of {self.vocab_size}")
        return self.weight[tokens]

    def unembed(self, h: Tensor) -> Tensor:
        lead = h.shape[:-1]
        logits = matmul(h.reshape(-1, self.dim), self.weight.T)
        return logits.reshape(*lead, self.vocab_size)


class RmsNorm(Module):
    def __init__(self, dim: int, eps: float = RMS_EPS, dtype=None):
        self.dim = dim
        self.eps = eps
        self.gain = Parameter(np.ones(dim), dtype=np.dtype(dtype or get_default_dtype()))

    def __call__(self, x: Tensor) -> Tensor:
        return rmsnorm_forward(self, x)


class SwigluFfn(Module):
    def __init__(self, d_model: int, d_ff: int, generator: np.random.Generator = None, dtype=None):
        self.d_model = d_model
        self.d_ff = d_ff
        self.gate = Linear(d_model, d_ff, generator, dtype)
        self.up = Linear(d_model, d_ff, generator, dtype)
        self.down = Linear(d_ff, d_model, generator, dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return swiglu_forward(self, x)


def rms_normalize(x: Tensor, eps: float = RMS_EPS) -> Tensor:
    """x / sqrt(mean(x^2) + eps) over the last axis"""
    mean_square = (x * x).mean(axis=-1, keepdims=True)
    return x * (mean_square + eps) ** -0.5


def rmsnorm_forward(norm: RmsNorm, x: Tensor) -> Tensor:
    if x.shape[-1] != norm.dim:
        raise ShapeError(f"RmsNorm({norm.dim}) got last dimension {x.shape[-1]}")
    return rms_normalize(x, norm.eps) * norm.gain


def swiglu_forward(ffn: SwigluFfn, x: Tensor) -> Tensor:
    return ffn.down(ffn.gate(x).silu() * ffn.up(x))
