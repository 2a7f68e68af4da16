"""
Decomposition of 2x2 real blocks into four orthogonal basis matrices.

sigma0 is the identity, sigma1 the swap reflection, sigma2 the quarter-turn
rotation and sigma3 the axis reflection. Tied blocks [[a, b], [-b, a]] live in
span{sigma0, sigma2}; the two reflections are what a tied projection can
never express.
"""

from typing import Tuple

import numpy as np

SIGMA = np.array([
    [[1.0, 0.0], [0.0, 1.0]],
    [[0.0, 1.0], [1.0, 0.0]],
    [[0.0, -1.0], [1.0, 0.0]],
    [[1.0, 0.0], [0.0, -1.0]],
])


def pauli_decompose(block) -> Tuple[float, float, float, float]:
    block = np.asarray(block, dtype=np.float64)
    if block.shape != (2, 2):
        raise ValueError(f"expected a 2x2 block, got shape {block.shape}")
    # Every basis matrix has squared Frobenius norm 2
    c0, c1, c2, c3 = (float((SIGMA[i] * block).sum()) / 2.0 for i in range(4))
    return c0, c1, c2, c3


def pauli_reconstruct(coefficients) -> np.ndarray:
    return np.tensordot(np.asarray(coefficients, dtype=np.float64), SIGMA, axes=1)


def nearest_tied_block(block) -> Tuple[np.ndarray, float]:
    """Closest [[a, b], [-b, a]] block in Frobenius norm and its distance"""
    c0, _, c2, _ = pauli_decompose(block)
    nearest = c0 * SIGMA[0] + c2 * SIGMA[2]
    distance = float(np.linalg.norm(np.asarray(block, dtype=np.float64) - nearest))
    return nearest, distance


def block_coefficients(weight: np.ndarray) -> np.ndarray:
    """Basis coefficients of every 2x2 block of a [2R, 2C] matrix, shape [R, C, 4]"""
    weight = np.asarray(weight, dtype=np.float64)
    rows, cols = weight.shape[0] // 2, weight.shape[1] // 2
    blocks = weight.reshape(rows, 2, cols, 2).transpose(0, 2, 1, 3)
    return np.einsum('rcij,kij->rck', blocks, SIGMA) / 2.0


def reflection_energy(weight: np.ndarray) -> float:
    """Share of a matrix's squared Frobenius norm carried by the reflection components"""
    coefficients = block_coefficients(weight)
    total = (coefficients ** 2).sum()
    if total == 0:
        return 0.0
    return float((coefficients[..., [1, 3]] ** 2).sum() / total)
