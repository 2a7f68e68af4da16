"""
Reverse-mode automatic differentiation over dense numpy arrays.

Every differentiable op returns a new Tensor that remembers its parents and a
backward closure mapping the output gradient to one gradient per parent.
``Tensor.backward`` walks the graph in reverse topological order and
accumulates into the ``grad`` buffers of leaf tensors. The graph is rebuilt on
every forward pass.
"""

import contextlib
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from errors import NumericError, ShapeError

_GRAD_ENABLED = True
_DEFAULT_DTYPE = np.dtype(np.float32)

MASK_VALUE = -1e9


def get_default_dtype() -> np.dtype:
    return _DEFAULT_DTYPE


@contextlib.contextmanager
def default_dtype(dtype):
    """Temporarily change the dtype used for tensors built from Python data"""
    global _DEFAULT_DTYPE
    previous = _DEFAULT_DTYPE
    _DEFAULT_DTYPE = np.dtype(dtype)
    try:
        yield
    finally:
        _DEFAULT_DTYPE = previous


@contextlib.contextmanager
def no_grad():
    """Run ops without recording a backward graph"""
    global _GRAD_ENABLED
    previous = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


def is_grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    """Dense real array with an optional gradient and backward record"""

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if dtype is None:
            if isinstance(data, np.ndarray) and np.issubdtype(data.dtype, np.floating):
                dtype = data.dtype
            else:
                dtype = _DEFAULT_DTYPE
        self.data = np.asarray(data, dtype=dtype)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.op = ''
        self._parents: Tuple['Tensor', ...] = ()
        self._backward: Optional[Callable] = None

    # ------------------------------------------------------------------
    # Introspection
    # ------------------------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def T(self) -> 'Tensor':
        return self.swapaxes(-1, -2)

    def item(self) -> float:
        return self.data.item()

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        tag = f", op={self.op}" if self.op else ''
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{tag})"

    # ------------------------------------------------------------------
    # Arithmetic
    # ------------------------------------------------------------------

    def __add__(self, other):
        other = _lift(other, self)

        def backward(g):
            return _unbroadcast(g, self.shape), _unbroadcast(g, other.shape)

        return _result(self.data + other.data, (self, other), 'add', backward)

    __radd__ = __add__

    def __sub__(self, other):
        other = _lift(other, self)

        def backward(g):
            return _unbroadcast(g, self.shape), _unbroadcast(-g, other.shape)

        return _result(self.data - other.data, (self, other), 'sub', backward)

    def __rsub__(self, other):
        return _lift(other, self) - self

    def __mul__(self, other):
        other = _lift(other, self)

        def backward(g):
            return (_unbroadcast(g * other.data, self.shape),
                    _unbroadcast(g * self.data, other.shape))

        return _result(self.data * other.data, (self, other), 'mul', backward)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _lift(other, self)

        def backward(g):
            return (_unbroadcast(g / other.data, self.shape),
                    _unbroadcast(-g * self.data / (other.data * other.data), other.shape))

        return _result(self.data / other.data, (self, other), 'div', backward)

    def __rtruediv__(self, other):
        return _lift(other, self) / self

    def __neg__(self):
        return _result(-self.data, (self,), 'neg', lambda g: (-g,))

    def __pow__(self, exponent: float):
        if isinstance(exponent, Tensor):
            raise TypeError("tensor exponents are not supported")

        def backward(g):
            return (g * exponent * self.data ** (exponent - 1),)

        return _result(self.data ** exponent, (self,), 'pow', backward)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        if isinstance(index, Tensor):
            index = index.data

        def backward(g):
            full = np.zeros(self.shape, dtype=self.dtype)
            if _is_advanced(index):
                np.add.at(full, index, g)
            else:
                full[index] += g
            return (full,)

        return _result(self.data[index], (self,), 'index', backward)

    # ------------------------------------------------------------------
    # Reductions and elementwise functions
    # ------------------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        def backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, _normalize_axes(axis, self.ndim))
            return (np.broadcast_to(g, self.shape),)

        return _result(np.asarray(self.data.sum(axis=axis, keepdims=keepdims)),
                       (self,), 'sum', backward)

    def mean(self, axis=None, keepdims: bool = False):
        if axis is None:
            count = self.size
        else:
            count = int(np.prod([self.shape[a] for a in _normalize_axes(axis, self.ndim)]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def exp(self):
        out = np.exp(self.data)
        return _result(out, (self,), 'exp', lambda g: (g * out,))

    def log(self):
        return _result(np.log(self.data), (self,), 'log', lambda g: (g / self.data,))

    def sigmoid(self):
        out = np.exp(-np.logaddexp(0.0, -self.data)).astype(self.dtype, copy=False)
        return _result(out, (self,), 'sigmoid', lambda g: (g * out * (1.0 - out),))

    def silu(self):
        return self * self.sigmoid()

    # ------------------------------------------------------------------
    # Shape manipulation
    # ------------------------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        original = self.shape
        return _result(self.data.reshape(shape), (self,), 'reshape',
                       lambda g: (g.reshape(original),))

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        if not axes:
            axes = tuple(reversed(range(self.ndim)))
        inverse = tuple(np.argsort(axes))
        return _result(self.data.transpose(axes), (self,), 'transpose',
                       lambda g: (g.transpose(inverse),))

    def swapaxes(self, a: int, b: int):
        axes = list(range(self.ndim))
        axes[a], axes[b] = axes[b], axes[a]
        return self.transpose(tuple(axes))

    # ------------------------------------------------------------------
    # Backward pass
    # ------------------------------------------------------------------

    def backward(self):
        """Accumulate d(self)/d(leaf) into every reachable leaf requiring grad"""
        if self.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {self.shape}")

        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(_topological_order(self)):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.requires_grad:
                    g = np.asarray(g, dtype=node.dtype)
                    node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, parent_grad in zip(node._parents, node._backward(g)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = parent_grad if key not in grads else grads[key] + parent_grad


class Parameter(Tensor):
    """Named leaf tensor owned by a model"""

    def __init__(self, data, name: str = '', trainable: bool = True, dtype=None):
        super().__init__(data, requires_grad=trainable, dtype=dtype)
        self.name = name
        self.trainable = trainable

    def __repr__(self):
        return f"Parameter(name={self.name!r}, shape={self.shape}, dtype={self.dtype})"


# ----------------------------------------------------------------------
# Graph helpers
# ----------------------------------------------------------------------


def _result(data, parents: Sequence[Tensor], op: str, backward: Callable) -> Tensor:
    out = Tensor(np.asarray(data))
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.op = op
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _lift(value, like: Tensor) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=like.dtype))


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting"""
    grad = np.asarray(grad)
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _is_advanced(index) -> bool:
    parts = index if isinstance(index, tuple) else (index,)
    return any(isinstance(p, (np.ndarray, list)) for p in parts)


def _normalize_axes(axis, ndim: int) -> tuple:
    axes = axis if isinstance(axis, (tuple, list)) else (axis,)
    return tuple(sorted(a % ndim for a in axes))


def _topological_order(root: Tensor) -> list:
    order, visited = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


# ----------------------------------------------------------------------
# Ops
# ----------------------------------------------------------------------


def tensor(data, requires_grad: bool = False, dtype=None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, dtype=dtype)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product over the last two axes"""
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs at least 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")

    def backward(g):
        grad_a = g @ np.swapaxes(b.data, -1, -2)
        grad_b = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(grad_a, a.shape), _unbroadcast(grad_b, b.shape)

    return _result(a.data @ b.data, (a, b), 'matmul', backward)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    data = np.stack([t.data for t in tensors], axis=axis)

    def backward(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return _result(data, tensors, 'stack', backward)


def where(mask: np.ndarray, x: Tensor, fill: float) -> Tensor:
    """Keep ``x`` where ``mask`` is true, ``fill`` elsewhere"""
    mask = np.asarray(mask, dtype=bool)
    data = np.where(mask, x.data, np.asarray(fill, dtype=x.dtype))

    def backward(g):
        return (_unbroadcast(np.where(mask, g, 0), x.shape),)

    return _result(data, (x,), 'where', backward)


def softmax_rows(x: Tensor) -> Tensor:
    """Softmax over the last axis, stabilised by subtracting the row maximum"""
    if np.isnan(x.data).any():
        raise NumericError("softmax input contains NaN")
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return _result(out, (x,), 'softmax', backward)


def cross_entropy(logits: Tensor, targets) -> Tensor:
    """Mean negative log-softmax probability of ``targets`` along the last axis"""
    vocab = logits.shape[-1]
    flat = logits.data.reshape(-1, vocab)
    targets = np.asarray(targets).reshape(-1)
    if targets.shape[0] != flat.shape[0]:
        raise ShapeError(f"{targets.shape[0]} targets for logits of shape {logits.shape}")
    if targets.size and (targets.min() < 0 or targets.max() >= vocab):
        bad = targets[(targets < 0) | (targets >= vocab)][0]
        raise IndexError(f"target id {int(bad)} out of range for vocabulary of {vocab}")
    if np.isnan(flat).any():
        raise NumericError("cross_entropy logits contain NaN")

    rows = np.arange(flat.shape[0])
    peak = flat.max(axis=-1, keepdims=True)
    lse = peak + np.log(np.exp(flat - peak).sum(axis=-1, keepdims=True))
    nll = lse[:, 0] - flat[rows, targets]
    count = flat.shape[0]

    def backward(g):
        probs = np.exp(flat - lse)
        probs[rows, targets] -= 1.0
        return ((probs * (g / count)).reshape(logits.shape),)

    return _result(np.asarray(nll.mean(), dtype=logits.dtype), (logits,), 'cross_entropy', backward)


def backward(loss: Tensor):
    loss.backward()
