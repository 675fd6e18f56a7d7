"""Dense float64 arithmetic with reverse-mode automatic differentiation.

Every operation builds a node in a dynamically recorded computation graph
(the tape). Calling :func:`backward` on a scalar node replays the tape in
reverse topological order and accumulates gradients into every node that
requires them. All values are numpy float64 arrays.
"""
from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


class ConfigError(ValueError):
    """A configuration value is out of its valid range."""


class UsageError(RuntimeError):
    """An operation was invoked outside its contract."""


class Rng:
    """Seeded random source; identical seed gives identical draws everywhere."""

    def __init__(self, seed, _seq=None):
        self.seed = int(seed)
        seq = _seq if _seq is not None else np.random.SeedSequence(self.seed)
        self._seq = seq
        self._gen = np.random.Generator(np.random.PCG64(seq))

    def spawn(self, key):
        """Derive an independent stream; deterministic in (seed, key)."""
        return Rng(self.seed, _seq=np.random.SeedSequence(self.seed, spawn_key=(int(key),)))

    def random(self, shape):
        return self._gen.random(shape)

    def uniform(self, low, high, shape):
        return self._gen.uniform(low, high, shape)

    def normal(self, scale, shape):
        return self._gen.normal(0.0, scale, shape)

    def permutation(self, n):
        return self._gen.permutation(n)

    def integers(self, low, high, shape=None):
        return self._gen.integers(low, high, size=shape)


class Tensor:
    """A value on the tape. Leaf tensors with ``requires_grad`` collect gradients."""

    __slots__ = ("value", "grad", "requires_grad", "parents", "_grad_fn")

    def __init__(self, value, requires_grad=False, parents=(), grad_fn=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.parents = tuple(parents)
        self._grad_fn = grad_fn

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __repr__(self):
        return f"Tensor(shape={self.value.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(value, parents, grad_fn):
    needs = any(p.requires_grad for p in parents)
    return Tensor(value, requires_grad=needs, parents=parents, grad_fn=grad_fn if needs else None)


def _unbroadcast(grad, shape):
    """Sum a broadcast gradient back down to the original operand shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    value = a.value + b.value

    def grad_fn(g):
        return _unbroadcast(g, a.value.shape), _unbroadcast(g, b.value.shape)

    return _node(value, (a, b), grad_fn)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    value = a.value - b.value

    def grad_fn(g):
        return _unbroadcast(g, a.value.shape), _unbroadcast(-g, b.value.shape)

    return _node(value, (a, b), grad_fn)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    value = a.value * b.value

    def grad_fn(g):
        return (_unbroadcast(g * b.value, a.value.shape),
                _unbroadcast(g * a.value, b.value.shape))

    return _node(value, (a, b), grad_fn)


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.value.ndim != 2 or b.value.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.value.shape} and {b.value.shape}")
    if a.value.shape[1] != b.value.shape[0]:
        raise ShapeError(f"cannot multiply {a.value.shape} by {b.value.shape}")
    value = a.value @ b.value

    def grad_fn(g):
        return g @ b.value.T, a.value.T @ g

    return _node(value, (a, b), grad_fn)


def transpose(a):
    a = as_tensor(a)
    return _node(a.value.T, (a,), lambda g: (g.T,))


def reshape(a, shape):
    a = as_tensor(a)
    old = a.value.shape
    return _node(a.value.reshape(shape), (a,), lambda g: (g.reshape(old),))


def concat_rows(a):
    """Flatten a matrix into a single row vector, row 1 first."""
    a = as_tensor(a)
    if a.value.ndim != 2:
        raise ShapeError(f"concat_rows expects a matrix, got shape {a.value.shape}")
    return reshape(a, (1, a.value.size))


def relu(a):
    a = as_tensor(a)
    mask = a.value > 0

    def grad_fn(g):
        return (g * mask,)

    return _node(np.where(mask, a.value, 0.0), (a,), grad_fn)


def tanh(a):
    a = as_tensor(a)
    value = np.tanh(a.value)

    def grad_fn(g):
        return (g * (1.0 - value * value),)

    return _node(value, (a,), grad_fn)


def elementwise(kind, a):
    if kind == "relu":
        return relu(a)
    if kind == "tanh":
        return tanh(a)
    raise ConfigError(f"unknown elementwise kind {kind!r}")


def row_softmax(a):
    """Softmax along the last axis, max-shifted for stability."""
    a = as_tensor(a)
    shifted = a.value - a.value.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    value = e / e.sum(axis=-1, keepdims=True)

    def grad_fn(g):
        dot = (g * value).sum(axis=-1, keepdims=True)
        return (value * (g - dot),)

    return _node(value, (a,), grad_fn)


def log(a):
    a = as_tensor(a)

    def grad_fn(g):
        return (g / a.value,)

    return _node(np.log(a.value), (a,), grad_fn)


def clip_min(a, floor):
    """max(a, floor); clamped entries get zero gradient."""
    a = as_tensor(a)
    mask = a.value > floor

    def grad_fn(g):
        return (g * mask,)

    return _node(np.maximum(a.value, floor), (a,), grad_fn)


def dropout(a, rate, rng, training):
    """Inverted dropout: train-time masking with 1/(1-rate) rescale, eval identity."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    a = as_tensor(a)
    if not training or rate == 0.0:
        return a
    mask = (rng.random(a.value.shape) >= rate) / (1.0 - rate)

    def grad_fn(g):
        return (g * mask,)

    return _node(a.value * mask, (a,), grad_fn)


def einsum(subscripts, a, b):
    """Two-operand einsum with gradients obtained by swapping subscripts.

    Restricted to contractions where every index of each operand appears in
    the output or the other operand (no diagonals), which covers all uses here.
    """
    a, b = as_tensor(a), as_tensor(b)
    ins, out = subscripts.replace(" ", "").split("->")
    sub_a, sub_b = ins.split(",")
    for own, other in ((sub_a, sub_b), (sub_b, sub_a)):
        if not set(own) <= set(out) | set(other) or len(set(own)) != len(own):
            raise UsageError(f"unsupported einsum pattern {subscripts!r}")
    value = np.einsum(subscripts, a.value, b.value)

    def grad_fn(g):
        ga = np.einsum(f"{out},{sub_b}->{sub_a}", g, b.value)
        gb = np.einsum(f"{sub_a},{out}->{sub_b}", a.value, g)
        return ga, gb

    return _node(value, (a, b), grad_fn)


def stack_last(tensors):
    """Stack equal-shaped tensors along a new trailing axis."""
    tensors = [as_tensor(t) for t in tensors]
    value = np.stack([t.value for t in tensors], axis=-1)

    def grad_fn(g):
        return tuple(g[..., i] for i in range(len(tensors)))

    return _node(value, tuple(tensors), grad_fn)


def max_last(a):
    """Maximum over the last axis; ties send the gradient to the first maximum."""
    a = as_tensor(a)
    value = a.value.max(axis=-1)
    hit = a.value == value[..., None]
    first = hit & (np.cumsum(hit, axis=-1) == 1)

    def grad_fn(g):
        return (first * g[..., None],)

    return _node(value, (a,), grad_fn)


def mean_last(a):
    a = as_tensor(a)
    n = a.value.shape[-1]

    def grad_fn(g):
        return (np.repeat(g[..., None], n, axis=-1) / n,)

    return _node(a.value.mean(axis=-1), (a,), grad_fn)


def total_sum(a):
    a = as_tensor(a)
    shape = a.value.shape

    def grad_fn(g):
        return (np.full(shape, float(g)),)

    return _node(np.asarray(a.value.sum()), (a,), grad_fn)


def total_mean(a):
    a = as_tensor(a)
    return mul(total_sum(a), 1.0 / a.value.size)


def topo_order(root):
    """Nodes reachable from root, inputs before consumers."""
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            stack.append((p, False))
    return order


def backward(loss):
    """Reverse accumulation from a scalar loss over the recorded tape."""
    if loss.value.size != 1:
        raise UsageError(f"backward needs a scalar loss, got shape {loss.value.shape}")
    order = topo_order(loss)
    for node in order:
        if node._grad_fn is not None:
            node.grad = None  # non-leaf grads are scratch; leaf grads accumulate
    loss.grad = np.ones_like(loss.value)
    for node in reversed(order):
        if node._grad_fn is None or node.grad is None:
            continue
        grads = node._grad_fn(node.grad)
        for parent, g in zip(node.parents, grads):
            if g is None or not parent.requires_grad:
                continue
            parent.grad = g if parent.grad is None else parent.grad + g
        if node is not loss:
            node.grad = None


def zero_grads(params):
    for p in params:
        p.grad = None


def finite_diff_check(loss_fn, params, eps=1e-5):
    """Max relative error between analytic gradients and central differences.

    ``loss_fn`` rebuilds the loss from the current parameter values; it is
    re-evaluated with each entry perturbed by ±eps in turn.
    """
    if eps <= 0:
        raise ConfigError(f"eps must be positive, got {eps}")
    zero_grads(params)
    backward(loss_fn())
    analytic = [np.zeros_like(p.value) if p.grad is None else p.grad.copy() for p in params]
    worst = 0.0
    for p, ga in zip(params, analytic):
        flat_value = p.value.reshape(-1)
        flat_grad = ga.reshape(-1)
        for i in range(flat_value.size):
            orig = flat_value[i]
            flat_value[i] = orig + eps
            up = float(loss_fn().value)
            flat_value[i] = orig - eps
            down = float(loss_fn().value)
            flat_value[i] = orig
            numeric = (up - down) / (2.0 * eps)
            err = abs(flat_grad[i] - numeric) / max(1e-8, abs(flat_grad[i]) + abs(numeric))
            worst = max(worst, err)
    zero_grads(params)
    return worst
