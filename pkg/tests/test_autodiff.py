import numpy as np
import numpy.testing as npt
import pytest

from autodiff.gradcheck import check_param, grad_check, grad_check_report
from autodiff.rng import Rng
from autodiff.tensor import (MASK_VALUE, Parameter, Tensor, cross_entropy, default_dtype,
                             is_grad_enabled, matmul, no_grad, softmax_rows, stack, tensor, where)
from errors import NumericError, ShapeError


class TestOps:
    def test_matmul_matches_numpy(self, rng):
        a = rng.normal(size=(3, 4))
        b = rng.normal(size=(4, 5))
        npt.assert_allclose(matmul(tensor(a), tensor(b)).data, a @ b)
        npt.assert_allclose((tensor(a) @ tensor(b)).data, a @ b)

    def test_matmul_shape_error_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r'\(2, 3\).*\(4, 5\)'):
            matmul(tensor(np.zeros((2, 3))), tensor(np.zeros((4, 5))))

    def test_matmul_needs_matrices(self):
        with pytest.raises(ShapeError):
            matmul(tensor(np.zeros(3)), tensor(np.zeros((3, 2))))

    def test_softmax_rows_are_distributions(self, rng):
        out = softmax_rows(tensor(rng.normal(scale=30.0, size=(6, 9)))).data
        npt.assert_allclose(out.sum(axis=-1), 1.0, atol=1e-6)
        assert np.all(out >= 0)

    def test_softmax_masked_entries_vanish(self):
        x = tensor(np.array([[1.0, MASK_VALUE, 2.0]]))
        out = softmax_rows(x).data
        assert out[0, 1] == 0.0
        npt.assert_allclose(out.sum(), 1.0, atol=1e-6)

    def test_softmax_rejects_nan(self):
        with pytest.raises(NumericError):
            softmax_rows(tensor(np.array([[0.0, np.nan]])))

    def test_cross_entropy_uniform_logits(self):
        loss = cross_entropy(tensor(np.zeros((4, 10))), np.arange(4))
        npt.assert_allclose(loss.item(), np.log(10.0), rtol=1e-6)

    def test_cross_entropy_one_hot_limit(self):
        logits = np.full((1, 5), -50.0)
        logits[0, 3] = 50.0
        assert cross_entropy(tensor(logits, dtype=np.float64), [3]).item() < 1e-12

    def test_cross_entropy_rejects_bad_target(self):
        with pytest.raises(IndexError):
            cross_entropy(tensor(np.zeros((2, 5))), [0, 5])

    def test_where_fills(self):
        out = where(np.array([True, False]), tensor(np.array([1.0, 2.0])), -3.0)
        npt.assert_array_equal(out.data, [1.0, -3.0])

    def test_dtype_follows_context(self):
        assert tensor([1.0, 2.0]).dtype == np.float32
        with default_dtype(np.float64):
            assert tensor([1.0, 2.0]).dtype == np.float64
        assert tensor([1.0]).dtype == np.float32


class TestBackward:
    def test_backward_needs_scalar(self):
        x = Parameter(np.ones(3))
        with pytest.raises(ShapeError):
            (x * 2.0).backward()

    def test_reused_tensor_accumulates(self):
        x = Parameter(np.array([1.0, 2.0, 3.0]))
        (x * x).sum().backward()
        npt.assert_array_equal(x.grad, 2.0 * x.data)

    def test_leaf_grads_accumulate_across_calls(self):
        x = Parameter(np.array([1.0, -2.0]))
        (x * 3.0).sum().backward()
        (x * 3.0).sum().backward()
        npt.assert_array_equal(x.grad, [6.0, 6.0])

    def test_broadcast_gradients_are_reduced(self):
        x = Parameter(np.ones((3, 4)))
        b = Parameter(np.ones(4))
        (x + b).sum().backward()
        npt.assert_array_equal(b.grad, np.full(4, 3.0))

    def test_fancy_index_gradient_scatters(self):
        table = Parameter(np.zeros((5, 2)))
        table[np.array([1, 1, 3])].sum().backward()
        npt.assert_array_equal(table.grad[:, 0], [0.0, 2.0, 0.0, 1.0, 0.0])

    def test_slice_index_gradient(self):
        x = Parameter(np.arange(6.0).reshape(2, 3))
        x[..., 0::2].sum().backward()
        npt.assert_array_equal(x.grad, [[1.0, 0.0, 1.0], [1.0, 0.0, 1.0]])

    def test_no_grad_records_nothing(self):
        x = Parameter(np.ones(2))
        with no_grad():
            assert not is_grad_enabled()
            y = (x * 2.0).sum()
        assert is_grad_enabled()
        assert not y.requires_grad

    def test_stack_backward(self):
        a = Parameter(np.ones(2))
        b = Parameter(np.ones(2))
        (stack([a, b * 2.0], axis=-1) * np.array([1.0, 10.0])).sum().backward()
        npt.assert_array_equal(a.grad, [1.0, 1.0])
        npt.assert_array_equal(b.grad, [20.0, 20.0])


class TestGradCheck:
    def test_composite_expression(self, rng):
        x = check_param('x', rng.normal(size=(3, 4)))
        w = check_param('w', rng.normal(size=(4, 5)))
        targets = np.array([0, 4, 2])

        def loss():
            h = (x @ w).silu() * (x @ w).sigmoid()
            return cross_entropy(h - h.mean(axis=-1, keepdims=True), targets)

        assert grad_check(loss, [x, w]) < 1e-4

    def test_polynomial(self):
        x = check_param('x', [0.3, -1.2, 2.0])
        assert grad_check(lambda: (x ** 3 - x * 2.0).sum(), [x]) < 1e-6

    def test_exp_log_reshape_transpose(self, rng):
        x = check_param('x', rng.uniform(0.5, 2.0, size=(2, 3)))
        f = lambda: (x.exp().log().reshape(3, 2).transpose(1, 0) * x).sum()  # noqa: E731
        assert grad_check(f, {'x': x}) < 1e-6

    def test_constant_objective_has_zero_error(self):
        x = check_param('x', [1.0, 2.0])
        assert grad_check(lambda: (x * 0.0).sum() + 5.0, [x]) == 0.0

    def test_report_names_worst_entry(self, rng):
        x = check_param('x', rng.normal(size=(4,)))
        report = grad_check_report(lambda: (x * x).sum(), {'x': x})
        assert report['checked'] == 4
        assert report['max_rel_error'] < 1e-6

    def test_max_entries_samples(self, rng):
        x = check_param('x', rng.normal(size=(10, 10)))
        report = grad_check_report(lambda: (x * x).sum(), [x], max_entries=7)
        assert report['checked'] == 7

    def test_rejects_single_precision(self):
        x = Parameter(np.ones(2, dtype=np.float32), name='x')
        with pytest.raises(NumericError, match='float64'):
            grad_check(lambda: x.sum(), [x])

    def test_rejects_nondeterministic_objective(self):
        x = check_param('x', [1.0])
        noise = np.random.default_rng(0)
        with pytest.raises(NumericError, match='deterministic'):
            grad_check(lambda: x.sum() + Tensor(noise.normal(), dtype=np.float64), [x])

    def test_restores_parameters(self, rng):
        values = rng.normal(size=5)
        x = check_param('x', values)
        grad_check(lambda: (x * x).sum(), [x])
        npt.assert_array_equal(x.data, values)


class TestRng:
    def test_streams_are_independent(self):
        rng = Rng(5)
        first = rng.generator('a').normal(size=4)
        rng.generator('b').normal(size=1000)
        npt.assert_array_equal(rng.generator('a').normal(size=4), first)

    def test_state_recreates_streams(self):
        rng = Rng(11)
        expected = rng.generator('init').integers(0, 100, size=5)
        restored = Rng.from_state(rng.state())
        npt.assert_array_equal(restored.generator('init').integers(0, 100, size=5), expected)
        assert rng.state()['streams'] == ['init']
        assert rng.state()['bit_generator'] == 'Philox'

    def test_state_survives_reload(self):
        rng = Rng(3)
        rng.generator('init')
        rng.generator('batches:0')
        assert Rng.from_state(rng.state()).state() == rng.state()

    def test_seeds_differ(self):
        assert not np.array_equal(Rng(0).generator('x').normal(size=3),
                                  Rng(1).generator('x').normal(size=3))
