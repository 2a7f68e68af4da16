import math

import numpy as np

from autodiff.gradcheck import grad_check
from autodiff.tensor import Parameter, cross_entropy, matmul, softmax_rows, stack, tensor, where
from errors import NumericError
from layers.standard import rms_normalize
from verification.registry import check, holds, within

MODULE = 'autodiff-core'


@check(MODULE, 'matmul_matches_scalar_loops')
def matmul_example(generator):
    a = generator.normal(size=(5, 3))
    b = generator.normal(size=(3, 4))
    expected = np.array([[sum(a[i, k] * b[k, j] for k in range(3)) for j in range(4)] for i in range(5)])
    fixed = matmul(tensor([[1.0, 2.0], [3.0, 4.0]]), tensor([[5.0, 6.0], [7.0, 8.0]])).data
    if not np.array_equal(fixed, [[19.0, 22.0], [43.0, 50.0]]):
        return holds(False, f"2x2 product gave {fixed.tolist()}")
    return within(np.abs(matmul(tensor(a), tensor(b)).data - expected).max(), 1e-12)


@check(MODULE, 'softmax_rows_sum_to_one', seed=1)
def softmax_rows_sum(generator):
    worst = 0.0
    for scale in (1e-3, 1.0, 30.0, 1e3):
        x = generator.normal(size=(64, 17)) * scale
        worst = max(worst, np.abs(softmax_rows(tensor(x)).data.sum(axis=-1) - 1.0).max())
    shifted = softmax_rows(tensor([[1000.0, 1000.0, 1000.0]])).data
    worst = max(worst, np.abs(shifted - 1.0 / 3.0).max())
    closed = softmax_rows(tensor([[0.0, math.log(3.0)]])).data
    worst = max(worst, np.abs(closed - [0.25, 0.75]).max())
    return within(worst, 1e-12)


@check(MODULE, 'softmax_rejects_nan')
def softmax_nan(generator):
    try:
        softmax_rows(tensor([[0.0, float('nan')]]))
    except NumericError:
        return holds(True)
    return holds(False, "NaN input was accepted")


@check(MODULE, 'cross_entropy_closed_forms')
def cross_entropy_closed_form(generator):
    uniform = cross_entropy(tensor(np.zeros((3, 4))), [0, 1, 3]).item()
    skewed = cross_entropy(tensor([[0.0, math.log(3.0)]]), [1]).item()
    error = max(abs(uniform - math.log(4.0)), abs(skewed + math.log(0.75)))
    return within(error, 1e-12)


@check(MODULE, 'backward_twice_doubles_grads', seed=2)
def backward_accumulates(generator):
    x = Parameter(generator.normal(size=(4, 3)), name='x')
    a = tensor(generator.normal(size=(5, 4)))
    loss = (matmul(a, x).silu() * 1.5).sum()
    loss.backward()
    once = x.grad.copy()
    loss.backward()
    return holds(np.array_equal(x.grad, 2.0 * once), "second backward did not double the gradient exactly")


def _composite(generator):
    x = Parameter(generator.normal(size=(3, 4)), name='x')
    w = Parameter(generator.normal(size=(4, 6)), name='w')
    gain = Parameter(generator.normal(size=(6,)), name='gain')
    targets = generator.integers(0, 4, size=3)
    mask = generator.random((3, 4)) > 0.2

    def objective():
        h = x @ w
        normed = rms_normalize(h) * gain
        probs = softmax_rows(normed.silu())
        mixed = stack([normed, probs.log()], axis=0).mean(axis=0)
        picked = mixed[:, 1:5] / (1.0 + probs[:, :4].exp())
        logits = where(mask, picked, 0.0)
        return cross_entropy(logits, targets) + (x.T @ x).sum() * 0.01 + (w ** 2).mean()

    return objective, [x, w, gain]


@check(MODULE, 'composite_gradients_match_central_differences', seed=3)
def composite_grad_check(generator):
    worst = 0.0
    for trial in range(100):
        objective, params = _composite(np.random.default_rng([3, trial]))
        worst = max(worst, grad_check(objective, params, h=1e-5))
    return within(worst, 1e-4, "100 random composites of every differentiable op")


@check(MODULE, 'polynomial_gradient_exact')
def polynomial_grad_check(generator):
    x = Parameter(generator.normal(size=(8,)), name='x')
    return within(grad_check(lambda: (x * x).sum(), [x], h=1e-5), 1e-8)


@check(MODULE, 'constant_objective_zero_error')
def constant_grad_check(generator):
    x = Parameter(generator.normal(size=(4,)), name='x')
    return within(grad_check(lambda: (x * 0.0).sum() + 3.0, [x]), 0.0)


@check(MODULE, 'nondeterministic_objective_detected', seed=4)
def nondeterminism(generator):
    x = Parameter(generator.normal(size=(3,)), name='x')
    try:
        grad_check(lambda: (x * float(generator.normal())).sum(), [x])
    except NumericError:
        return holds(True)
    return holds(False, "objective with fresh noise on every call passed")
