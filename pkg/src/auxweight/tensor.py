"""Dense float64 tensors with reverse-mode automatic differentiation.

Every operation records its inputs and a backward rule on the produced
tensor; ``grads`` replays the captured graph in reverse creation order.
The graph is immutable once built, so differentiating the same loss twice
gives bit-identical results.
"""

import itertools

import numpy as np

from .errors import ConfigError, NumericError, UsageError
from . import kernels

_ids = itertools.count()

# Finiteness validation of primitive inputs. Cheap at the scales this
# package targets; can be switched off for benchmarks.
VALIDATE = True


def _as_array(value):
    return np.asarray(value, dtype=np.float64)


def _check_finite(op, *arrays):
    if not VALIDATE:
        return
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericError(f"non-finite values in input of primitive '{op}'")


class Tensor:
    """A node of the computation graph holding a float64 ndarray."""

    __slots__ = ("data", "parents", "backward_rule", "requires_grad", "op", "node_id")

    def __init__(self, data, parents=(), backward_rule=None, requires_grad=False, op="leaf"):
        self.data = data
        self.parents = parents
        self.backward_rule = backward_rule
        self.requires_grad = requires_grad
        self.op = op
        self.node_id = next(_ids)

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(op={self.op!r}, shape={self.data.shape})"

    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __rmul__(self, other):
        return mul(_lift(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, _lift(other))


def constant(value, op="const"):
    """Wrap a value as a non-differentiable leaf."""
    data = _as_array(value)
    _check_finite(op, data)
    return Tensor(data, op=op)


def parameter(value, name="param"):
    """Wrap a value as a trainable leaf (gradients flow into it)."""
    data = _as_array(value).copy()
    _check_finite(name, data)
    return Tensor(data, requires_grad=True, op=name)


def _lift(value):
    return value if isinstance(value, Tensor) else constant(value)


def _make(op, data, parents, backward_rule):
    req = any(p.requires_grad for p in parents)
    return Tensor(data, parents=tuple(parents), backward_rule=backward_rule,
                  requires_grad=req, op=op)


def _unbroadcast(grad, shape):
    """Sum a broadcast gradient back down to the original operand shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# primitives


def add(a, b):
    a, b = _lift(a), _lift(b)
    _check_finite("add", a.data, b.data)
    try:
        out = a.data + b.data
    except ValueError as exc:
        raise ConfigError(f"add: incompatible shapes {a.shape} and {b.shape}") from exc

    def rule(grad):
        return _unbroadcast(grad, a.shape), _unbroadcast(grad, b.shape)

    return _make("add", out, (a, b), rule)


def sub(a, b):
    a, b = _lift(a), _lift(b)
    _check_finite("sub", a.data, b.data)
    try:
        out = a.data - b.data
    except ValueError as exc:
        raise ConfigError(f"sub: incompatible shapes {a.shape} and {b.shape}") from exc

    def rule(grad):
        return _unbroadcast(grad, a.shape), _unbroadcast(-grad, b.shape)

    return _make("sub", out, (a, b), rule)


def mul(a, b):
    a, b = _lift(a), _lift(b)
    _check_finite("mul", a.data, b.data)
    try:
        out = a.data * b.data
    except ValueError as exc:
        raise ConfigError(f"mul: incompatible shapes {a.shape} and {b.shape}") from exc

    def rule(grad):
        ga = _unbroadcast(grad * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(grad * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return _make("mul", out, (a, b), rule)


def neg(a):
    a = _lift(a)
    _check_finite("neg", a.data)
    return _make("neg", -a.data, (a,), lambda grad: (-grad,))


def matmul(a, b):
    a, b = _lift(a), _lift(b)
    _check_finite("matmul", a.data, b.data)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ConfigError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    out = a.data @ b.data

    def rule(grad):
        ga = grad @ b.data.T if a.requires_grad else None
        gb = a.data.T @ grad if b.requires_grad else None
        return ga, gb

    return _make("matmul", out, (a, b), rule)


def relu(a):
    a = _lift(a)
    _check_finite("relu", a.data)
    out = np.maximum(a.data, 0.0)

    def rule(grad):
        return (grad * (a.data > 0.0),)

    return _make("relu", out, (a,), rule)


def sigmoid(a):
    a = _lift(a)
    _check_finite("sigmoid", a.data)
    t = np.exp(-np.abs(a.data))
    out = np.where(a.data >= 0.0, 1.0 / (1.0 + t), t / (1.0 + t))

    def rule(grad):
        return (grad * out * (1.0 - out),)

    return _make("sigmoid", out, (a,), rule)


def softplus(a):
    a = _lift(a)
    _check_finite("softplus", a.data)
    out = np.logaddexp(0.0, a.data)

    def rule(grad):
        t = np.exp(-np.abs(a.data))
        sig = np.where(a.data >= 0.0, 1.0 / (1.0 + t), t / (1.0 + t))
        return (grad * sig,)

    return _make("softplus", out, (a,), rule)


def log_softmax(a):
    """Row-wise log-softmax of a 2-D tensor."""
    a = _lift(a)
    _check_finite("log_softmax", a.data)
    if a.data.ndim != 2:
        raise ConfigError(f"log_softmax: expected 2-D input, got shape {a.shape}")
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))

    def rule(grad):
        return (grad - np.exp(out) * grad.sum(axis=1, keepdims=True),)

    return _make("log_softmax", out, (a,), rule)


def tsum(a, axis=None):
    a = _lift(a)
    _check_finite("sum", a.data)
    out = a.data.sum(axis=axis)

    def rule(grad):
        if axis is None:
            return (np.broadcast_to(grad, a.shape).copy(),)
        g = np.expand_dims(grad, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make("sum", _as_array(out), (a,), rule)


def tmean(a, axis=None):
    a = _lift(a)
    _check_finite("mean", a.data)
    count = a.data.size if axis is None else a.shape[axis]
    out = a.data.mean(axis=axis)

    def rule(grad):
        if axis is None:
            return (np.broadcast_to(grad / count, a.shape).copy(),)
        g = np.expand_dims(grad, axis) / count
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make("mean", _as_array(out), (a,), rule)


def gather_rows(a, index):
    """Select rows of a 2-D tensor; gradients scatter-add back."""
    a = _lift(a)
    _check_finite("gather_rows", a.data)
    index = np.asarray(index, dtype=np.int64)
    if index.ndim != 1:
        raise UsageError("gather_rows: index must be 1-D")
    if len(index) and (index.min() < 0 or index.max() >= a.shape[0]):
        raise UsageError(f"gather_rows: index out of range for {a.shape[0]} rows")
    out = a.data[index]

    def rule(grad):
        g = np.zeros_like(a.data)
        np.add.at(g, index, grad)
        return (g,)

    return _make("gather_rows", out, (a,), rule)


def concat(tensors, axis=1):
    tensors = [_lift(t) for t in tensors]
    _check_finite("concat", *(t.data for t in tensors))
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ConfigError(f"concat: incompatible shapes {[t.shape for t in tensors]}") from exc
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]

    def rule(grad):
        return tuple(np.split(grad, cuts, axis=axis))

    return _make("concat", out, tuple(tensors), rule)


def spmm_sym(csr, a):
    """Multiply a symmetric CSR matrix (constant) by a 2-D tensor.

    ``csr`` is an (offsets, indices, values) triple; symmetry makes the
    backward pass the same product applied to the incoming gradient.
    """
    a = _lift(a)
    _check_finite("spmm", a.data)
    offsets, indices, values = csr
    if a.data.ndim != 2 or (len(indices) and indices.max() >= a.shape[0]):
        raise ConfigError(f"spmm: operand shape {a.shape} incompatible with CSR matrix")
    dense = np.ascontiguousarray(a.data)
    out = kernels.spmm(offsets, indices, values, dense)

    def rule(grad):
        return (kernels.spmm(offsets, indices, values, np.ascontiguousarray(grad)),)

    return _make("spmm", out, (a,), rule)


# ---------------------------------------------------------------------------
# reverse sweep


def grads(loss, wrt):
    """Gradient of a scalar loss with respect to each tensor in ``wrt``.

    Replays the recorded graph once in reverse creation order. Tensors in
    ``wrt`` that the loss does not reach get zero gradients.
    """
    if not isinstance(loss, Tensor):
        raise UsageError("grads: loss must be a Tensor")
    if loss.data.ndim != 0:
        raise UsageError(f"grads: loss must be scalar, got shape {loss.shape}")

    # Reachable differentiable subgraph, found without recursion.
    nodes = {}
    stack = [loss]
    while stack:
        node = stack.pop()
        if node.node_id in nodes or not node.requires_grad:
            continue
        nodes[node.node_id] = node
        stack.extend(node.parents)

    grad_of = {loss.node_id: np.ones((), dtype=np.float64)}
    for node in sorted(nodes.values(), key=lambda n: n.node_id, reverse=True):
        grad = grad_of.get(node.node_id)
        if grad is None or node.backward_rule is None:
            continue
        parent_grads = node.backward_rule(grad)
        for parent, pgrad in zip(node.parents, parent_grads):
            if pgrad is None or not parent.requires_grad:
                continue
            acc = grad_of.get(parent.node_id)
            grad_of[parent.node_id] = pgrad if acc is None else acc + pgrad

    return [grad_of.get(t.node_id, np.zeros_like(t.data)) for t in wrt]
