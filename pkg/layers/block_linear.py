"""
Linear projections stored as a grid of 2x2 blocks.

A tied layer keeps two free scalars (a, b) per block and always materializes
the block as [[a, b], [-b, a]]. Under the interleaved pair layout, where real
coordinates 2t and 2t+1 are the real and imaginary parts of complex entry t,
such a block is multiplication by the complex weight a - b i. An untied layer
keeps all four block entries and is an ordinary dense projection.
"""

import numpy as np

from autodiff.tensor import Parameter, Tensor, get_default_dtype, matmul, stack
from errors import ConfigError, ShapeError
from layers.module import Module


class BlockLinear(Module):
    """Bias-free projection in_dim -> out_dim with optional complex tying"""

    def __init__(self, in_dim: int, out_dim: int, tied: bool = True,
                 generator: np.random.Generator = None, dtype=None):
        for label, dim in (('in_dim', in_dim), ('out_dim', out_dim)):
            if dim <= 0 or dim % 2:
                raise ConfigError(f"BlockLinear {label} must be a positive even integer, got {dim}")

        self.in_dim = in_dim
        self.out_dim = out_dim
        self.tied = tied

        dtype = np.dtype(dtype or get_default_dtype())
        shape = (out_dim // 2, in_dim // 2, 2 if tied else 4)
        if generator is None:
            # Read-only placeholder; counting and loading need shapes only
            data = np.broadcast_to(np.zeros((), dtype=dtype), shape)
        else:
            data = generator.normal(0.0, 1.0 / np.sqrt(in_dim), size=shape).astype(dtype)
        self.blocks = Parameter(data, dtype=dtype)

    @property
    def free_params(self) -> Parameter:
        return self.blocks

    def weight(self) -> Tensor:
        """Materialized [out_dim, in_dim] weight, differentiable w.r.t. the blocks"""
        rows, cols = self.out_dim // 2, self.in_dim // 2
        if self.tied:
            a = self.blocks[..., 0]
            b = self.blocks[..., 1]
            quad = stack([a, b, -b, a], axis=-1)
        else:
            quad = self.blocks
        return (quad.reshape(rows, cols, 2, 2)
                .transpose(0, 2, 1, 3)
                .reshape(self.out_dim, self.in_dim))

    def weight_array(self) -> np.ndarray:
        return _materialize(np.asarray(self.blocks.data), self.tied)

    def __call__(self, x: Tensor) -> Tensor:
        return block_linear_forward(self, x)

    def __repr__(self):
        kind = 'tied' if self.tied else 'untied'
        return f"BlockLinear({self.in_dim} -> {self.out_dim}, {kind})"


def _materialize(blocks: np.ndarray, tied: bool) -> np.ndarray:
    if tied:
        a, b = blocks[..., 0], blocks[..., 1]
        blocks = np.stack([a, b, -b, a], axis=-1)
    rows, cols = blocks.shape[:2]
    return blocks.reshape(rows, cols, 2, 2).transpose(0, 2, 1, 3).reshape(2 * rows, 2 * cols)


def block_linear_forward(layer: BlockLinear, x: Tensor) -> Tensor:
    if x.shape[-1] != layer.in_dim:
        raise ShapeError(f"{layer!r} got input with last dimension {x.shape[-1]}")
    lead = x.shape[:-1]
    flat = x.reshape(-1, layer.in_dim)
    y = matmul(flat, layer.weight().T)
    return y.reshape(*lead, layer.out_dim)


def to_complex(x) -> np.ndarray:
    """Read the last axis as interleaved (real, imag) pairs"""
    x = np.asarray(x.data if isinstance(x, Tensor) else x)
    if x.shape[-1] % 2:
        raise ShapeError(f"interleaved complex layout needs an even last dimension, got {x.shape}")
    return x[..., 0::2] + 1j * x[..., 1::2]


def to_real(z) -> np.ndarray:
    """Inverse of to_complex"""
    z = np.asarray(z)
    out = np.empty(z.shape[:-1] + (2 * z.shape[-1],), dtype=z.real.dtype)
    out[..., 0::2] = z.real
    out[..., 1::2] = z.imag
    return out


def complex_weight(layer: BlockLinear) -> np.ndarray:
    """Complex [out_dim/2, in_dim/2] matrix of a tied layer"""
    if not layer.tied:
        raise ConfigError(f"{layer!r} has no complex form: only tied layers are complex-linear")
    blocks = np.asarray(layer.blocks.data)
    return blocks[..., 0] - 1j * blocks[..., 1]


def complex_oracle_forward(layer: BlockLinear, x) -> np.ndarray:
    """Apply a tied layer through explicit complex arithmetic"""
    w = complex_weight(layer)
    xc = to_complex(x)
    if xc.shape[-1] != w.shape[1]:
        raise ShapeError(f"{layer!r} got input with last dimension {2 * xc.shape[-1]}")
    return to_real(xc @ w.T)


def count_params(layer) -> int:
    if isinstance(layer, BlockLinear):
        return int(layer.blocks.size)
    return layer.num_parameters()


def from_dense(weight: np.ndarray, dtype=None) -> BlockLinear:
    """Untied layer holding exactly the given [out_dim, in_dim] matrix"""
    weight = np.asarray(weight)
    out_dim, in_dim = weight.shape
    layer = BlockLinear(in_dim, out_dim, tied=False, dtype=dtype or weight.dtype)
    blocks = (weight.reshape(out_dim // 2, 2, in_dim // 2, 2)
              .transpose(0, 2, 1, 3)
              .reshape(out_dim // 2, in_dim // 2, 4))
    layer.blocks.data = np.ascontiguousarray(blocks, dtype=layer.blocks.dtype)
    return layer


def untied_blocks(tied_blocks: np.ndarray) -> np.ndarray:
    """Four-entry blocks [a, b, -b, a] equivalent to tied (a, b) blocks"""
    a, b = tied_blocks[..., 0], tied_blocks[..., 1]
    return np.stack([a, b, -b, a], axis=-1)


def tying_violation(layer_or_weight) -> float:
    """
    Largest deviation of a materialized weight from the tying relations.

    Zero for a healthy tied layer: W[i][j] == W[i+1][j+1] and
    W[i+1][j] == -W[i][j+1] for every even i, j.
    """
    if isinstance(layer_or_weight, BlockLinear):
        w = layer_or_weight.weight_array()
    else:
        w = np.asarray(layer_or_weight)
    diagonal = np.abs(w[0::2, 0::2] - w[1::2, 1::2])
    anti = np.abs(w[1::2, 0::2] + w[0::2, 1::2])
    return float(max(diagonal.max(), anti.max()))
