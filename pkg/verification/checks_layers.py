import math

import numpy as np

from autodiff.tensor import Parameter, tensor
from layers.block_linear import (BlockLinear, block_linear_forward, complex_oracle_forward,
                                 count_params, from_dense, tying_violation)
from layers.pauli import SIGMA, nearest_tied_block, pauli_decompose, pauli_reconstruct
from layers.standard import RmsNorm, SwigluFfn, rmsnorm_forward, swiglu_forward
from training.optimizer import AdamW
from verification.registry import check, fault_active, holds, within

MODULE = 'structured-layers'


@check(MODULE, 'tied_forward_matches_complex_oracle', seed=10)
def complex_oracle(generator):
    worst = 0.0
    for _ in range(1000):
        in_dim, out_dim = (2 * int(n) for n in generator.integers(1, 9, size=2))
        layer = BlockLinear(in_dim, out_dim, tied=True, generator=generator)
        x = generator.normal(size=(in_dim,))
        real = block_linear_forward(layer, tensor(x)).data
        worst = max(worst, np.abs(real - complex_oracle_forward(layer, x)).max())
    return within(worst, 1e-12, "1000 random shapes up to 16x16")


@check(MODULE, 'tying_relations_survive_updates', seed=11)
def tying_after_updates(generator):
    layer = BlockLinear(8, 8, tied=True, generator=generator)
    optimizer = AdamW([layer.blocks], weight_decay=0.1)
    for _ in range(25):
        layer.blocks.grad = generator.normal(size=layer.blocks.shape)
        optimizer.step(1e-2)
    weight = layer.weight_array()
    if fault_active('tying'):
        weight[0, 0] += 1e-3
    return within(tying_violation(weight), 0.0,
                  "W[i][j] == W[i+1][j+1] and W[i+1][j] == -W[i][j+1] for even i, j")


@check(MODULE, 'untied_layer_reproduces_dense_matmul', seed=12)
def dense_equivalence(generator):
    weight = generator.normal(size=(6, 10))
    x = generator.normal(size=(7, 10))
    layer = from_dense(weight)
    return within(np.abs(block_linear_forward(layer, tensor(x)).data - x @ weight.T).max(), 0.0)


@check(MODULE, 'tied_blocks_have_no_reflection_part', seed=13)
def pauli_tied(generator):
    worst = 0.0
    for a, b in generator.normal(size=(500, 2)):
        c0, c1, c2, c3 = pauli_decompose([[a, b], [-b, a]])
        worst = max(worst, abs(c1), abs(c3), abs(c0 - a), abs(c2 + b))
    return within(worst, 0.0, "c1 = c3 = 0, c0 = a, c2 = -b")


@check(MODULE, 'pauli_decomposition_reconstructs')
def pauli_example(generator):
    coefficients = pauli_decompose([[1.0, 2.0], [3.0, 4.0]])
    if coefficients != (2.5, 2.5, 0.5, -1.5):
        return holds(False, f"[[1,2],[3,4]] decomposed as {coefficients}")
    block = generator.normal(size=(2, 2))
    return within(np.abs(pauli_reconstruct(pauli_decompose(block)) - block).max(), 1e-15)


@check(MODULE, 'reflection_is_orthogonal_to_tied_blocks')
def reflection_distance(generator):
    nearest, distance = nearest_tied_block(SIGMA[3])
    if np.any(nearest != 0.0):
        return holds(False, f"nearest tied block to sigma3 is {nearest.tolist()}, expected zero")
    return within(abs(distance - math.sqrt(2.0)), 1e-15)


@check(MODULE, 'tied_layers_store_half_the_parameters', seed=14)
def param_ratio(generator):
    if count_params(BlockLinear(1024, 1024, tied=True)) != 524_288:
        return holds(False, "tied 1024x1024 layer does not hold 524,288 parameters")
    if count_params(BlockLinear(1024, 1024, tied=False)) != 1_048_576:
        return holds(False, "untied 1024x1024 layer does not hold 1,048,576 parameters")
    for in_dim, out_dim in 2 * generator.integers(1, 64, size=(50, 2)):
        tied = count_params(BlockLinear(int(in_dim), int(out_dim), tied=True))
        untied = count_params(BlockLinear(int(in_dim), int(out_dim), tied=False))
        if 2 * tied != untied or untied != in_dim * out_dim:
            return holds(False, f"{in_dim}x{out_dim}: tied {tied}, untied {untied}")
    return holds(True)


@check(MODULE, 'rmsnorm_closed_form')
def rmsnorm_closed_form(generator):
    norm = RmsNorm(2, eps=0.0)
    out = rmsnorm_forward(norm, tensor([3.0, 4.0])).data
    return within(np.abs(out - np.array([3.0, 4.0]) / math.sqrt(12.5)).max(), 1e-15)


@check(MODULE, 'swiglu_scalar_value')
def swiglu_scalar(generator):
    ffn = SwigluFfn(1, 1)
    for linear in (ffn.gate, ffn.up, ffn.down):
        linear.weight = Parameter(np.ones((1, 1)))
    out = swiglu_forward(ffn, tensor([[1.0]])).item()
    return within(abs(out - 1.0 / (1.0 + math.exp(-1.0))), 1e-15, "silu(1) = 0.731059")
