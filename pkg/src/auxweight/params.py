"""Named trainable parameters, flat vectors over them, and optimizers.

A ``ParamRegistry`` owns an ordered set of leaf tensors and freezes at
model construction; after that the flat layout (name, offset, shape) is
fixed, so gradient vectors and parameter vectors taken at different steps
line up coordinate by coordinate.
"""

import numpy as np

from . import tensor
from .errors import ConfigError, OracleError, UsageError


class ParamVector:
    """Flat float64 vector over a frozen layout."""

    __slots__ = ("values", "layout")

    def __init__(self, values, layout):
        self.values = np.asarray(values, dtype=np.float64)
        self.layout = layout

    def _check(self, other):
        if self.layout is not other.layout and self.layout != other.layout:
            raise UsageError("ParamVector layout mismatch")

    def __len__(self):
        return len(self.values)

    def copy(self):
        return ParamVector(self.values.copy(), self.layout)

    def add(self, other):
        self._check(other)
        return ParamVector(self.values + other.values, self.layout)

    def sub(self, other):
        self._check(other)
        return ParamVector(self.values - other.values, self.layout)

    def scale(self, factor):
        return ParamVector(self.values * float(factor), self.layout)

    def dot(self, other):
        self._check(other)
        return float(self.values @ other.values)

    def norm(self):
        return float(np.sqrt(self.values @ self.values))

    __add__ = add
    __sub__ = sub

    def __repr__(self):
        return f"ParamVector(n={len(self.values)})"


class ParamRegistry:
    """Ordered registry of named trainable leaves with a frozen flat layout."""

    def __init__(self, name="params"):
        self.name = name
        self._leaves = {}
        self._frozen = False
        self._layout = None

    def register(self, name, init):
        if self._frozen:
            raise ConfigError(f"{self.name}: registry frozen, cannot add '{name}'")
        if name in self._leaves:
            raise ConfigError(f"{self.name}: duplicate parameter '{name}'")
        leaf = tensor.parameter(init, name=f"{self.name}.{name}")
        self._leaves[name] = leaf
        return leaf

    def freeze(self):
        if not self._frozen:
            layout = []
            offset = 0
            for name, leaf in self._leaves.items():
                layout.append((name, offset, leaf.data.shape))
                offset += leaf.data.size
            self._layout = tuple(layout)
            self._size = offset
            self._frozen = True
        return self

    def _require_frozen(self):
        if not self._frozen:
            raise UsageError(f"{self.name}: registry must be frozen first")

    @property
    def layout(self):
        self._require_frozen()
        return self._layout

    @property
    def size(self):
        self._require_frozen()
        return self._size

    def leaves(self):
        return list(self._leaves.values())

    def names(self):
        return list(self._leaves.keys())

    def __getitem__(self, name):
        return self._leaves[name]

    def to_vector(self):
        self._require_frozen()
        flat = np.empty(self._size, dtype=np.float64)
        for name, offset, shape in self._layout:
            flat[offset:offset + int(np.prod(shape, dtype=np.int64))] = \
                self._leaves[name].data.ravel()
        return ParamVector(flat, self._layout)

    def set_vector(self, vec):
        self._require_frozen()
        if vec.layout != self._layout:
            raise UsageError(f"{self.name}: vector layout does not match registry")
        for name, offset, shape in self._layout:
            size = int(np.prod(shape, dtype=np.int64))
            self._leaves[name].data = vec.values[offset:offset + size].reshape(shape).copy()

    def zero_vector(self):
        self._require_frozen()
        return ParamVector(np.zeros(self._size), self._layout)

    def snapshot(self):
        """Current leaf arrays by reference; restore() puts them back bit-exactly."""
        return [leaf.data for leaf in self._leaves.values()]

    def restore(self, snap):
        for leaf, data in zip(self._leaves.values(), snap):
            leaf.data = data

    def grad_vector(self, loss):
        """Gradient of a scalar tape node w.r.t. every parameter, flattened."""
        return grad_vectors(loss, [self])[0]


def grad_vectors(loss, registries):
    """Gradients for several registries from a single reverse sweep."""
    leaves = []
    for reg in registries:
        reg._require_frozen()
        leaves.extend(reg.leaves())
    leaf_grads = tensor.grads(loss, leaves)
    out = []
    taken = 0
    for reg in registries:
        flat = np.empty(reg.size, dtype=np.float64)
        for (name, offset, shape), g in zip(reg.layout, leaf_grads[taken:]):
            size = int(np.prod(shape, dtype=np.int64))
            flat[offset:offset + size] = g.ravel()
        taken += len(reg.names())
        out.append(ParamVector(flat, reg.layout))
    return out


# ---------------------------------------------------------------------------
# optimizers


def sgd_step(params, grads, lr):
    if lr <= 0:
        raise ConfigError(f"sgd_step: lr must be positive, got {lr}")
    params._check(grads)
    return ParamVector(params.values - lr * grads.values, params.layout)


class AdamState:
    """First/second moment buffers plus the step counter."""

    def __init__(self, size):
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0


def adam_step(params, grads, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    if lr <= 0:
        raise ConfigError(f"adam_step: lr must be positive, got {lr}")
    params._check(grads)
    state.t += 1
    state.m = beta1 * state.m + (1.0 - beta1) * grads.values
    state.v = beta2 * state.v + (1.0 - beta2) * grads.values ** 2
    m_hat = state.m / (1.0 - beta1 ** state.t)
    v_hat = state.v / (1.0 - beta2 ** state.t)
    update = lr * m_hat / (np.sqrt(v_hat) + eps)
    return ParamVector(params.values - update, params.layout)


class Optimizer:
    """One optimizer instance per registry; kind is 'sgd' or 'adam'."""

    def __init__(self, kind, lr, size):
        if kind not in ("sgd", "adam"):
            raise ConfigError(f"unknown optimizer kind '{kind}'")
        if lr <= 0:
            raise ConfigError(f"optimizer lr must be positive, got {lr}")
        self.kind = kind
        self.lr = lr
        self.state = AdamState(size) if kind == "adam" else None

    def step(self, params, grads):
        if self.kind == "sgd":
            return sgd_step(params, grads, self.lr)
        return adam_step(params, grads, self.state, self.lr)


# ---------------------------------------------------------------------------
# finite-difference oracle


def finite_diff_grad(f, at, eps=1e-6):
    """Central-difference gradient estimate of a scalar function.

    ``f`` maps a ParamVector to a float and must be deterministic; this is
    checked by evaluating the baseline twice.
    """
    if eps <= 0:
        raise ConfigError(f"finite_diff_grad: eps must be positive, got {eps}")
    base1 = float(f(at))
    base2 = float(f(at))
    if base1 != base2:
        raise OracleError("finite_diff_grad: f is not deterministic "
                          f"({base1!r} != {base2!r})")
    out = np.empty(len(at.values))
    work = at.values.copy()
    for i in range(len(work)):
        orig = work[i]
        work[i] = orig + eps
        hi = float(f(ParamVector(work, at.layout)))
        work[i] = orig - eps
        lo = float(f(ParamVector(work, at.layout)))
        work[i] = orig
        out[i] = (hi - lo) / (2.0 * eps)
    return ParamVector(out, at.layout)
