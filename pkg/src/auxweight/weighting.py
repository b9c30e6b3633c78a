"""Learned task weighting: the weighting network, gradient cosine
similarity, joint-loss assembly, the closed-form meta-gradient, and the
rule-based baseline strategies.

The weighting network maps [similarity, type embedding, loss value] to a
strictly positive weight through a 2-layer MLP (ReLU hidden, softplus
output). Its parameters are trained by descending the target loss
evaluated after a virtual one-step update of the shared GNN parameters;
because that virtual update depends on the weighting parameters only
through the scalar weights multiplying fixed per-task gradient vectors,
the meta-gradient has an exact closed form and needs no second-order
differentiation through the GNN.
"""

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, NumericError, UsageError
from .params import ParamRegistry, ParamVector, sgd_step

STRATEGIES = ("no-aux", "fixed", "cosine-gate", "selar-like",
              "aux-ts-one-sim", "aux-ts-all-sims")
LEARNED_STRATEGIES = ("selar-like", "aux-ts-one-sim", "aux-ts-all-sims")

# softplus(b) = 1 at this bias, so a fresh model starts all weights near 1,
# the Fixed Weights baseline.
_SOFTPLUS_INV_ONE = float(np.log(np.e - 1.0))


def strategy_variant(strategy):
    """Weighting-network input variant a learned strategy needs."""
    if strategy == "aux-ts-all-sims":
        return "all-sims"
    if strategy in ("aux-ts-one-sim", "selar-like"):
        return "one-sim"
    return None


@dataclass
class WeightSignals:
    """Per-task cosine similarities and unweighted loss values (index 0 =
    target; sims[0] pinned to 1)."""

    sims: np.ndarray
    losses: np.ndarray

    def __post_init__(self):
        self.sims = np.asarray(self.sims, dtype=np.float64)
        self.losses = np.asarray(self.losses, dtype=np.float64)
        if self.sims.shape != self.losses.shape or self.sims.ndim != 1:
            raise UsageError("signals: sims and losses must be equal-length vectors")
        if not (np.all(np.isfinite(self.sims)) and np.all(np.isfinite(self.losses))):
            raise NumericError("signals contain non-finite values")
        if np.any(np.abs(self.sims) > 1.0 + 1e-12):
            raise UsageError("similarities must lie in [-1, 1]")
        if self.sims[0] != 1.0:
            raise UsageError("sims[0] is the target task and must be exactly 1")

    @property
    def num_aux(self):
        return len(self.sims) - 1


def cosine_similarity(u, v):
    """Cosine of the angle between two gradient vectors.

    Degenerate gradients (norm below 1e-12) give 0. Computed as
    dot(u,v)/sqrt(dot(u,u)*dot(v,v)) so two bit-identical vectors give
    exactly 1.0; the result is clipped to [-1, 1].
    """
    if isinstance(u, ParamVector) or isinstance(v, ParamVector):
        if not (isinstance(u, ParamVector) and isinstance(v, ParamVector)):
            raise UsageError("cosine_similarity: mixed vector kinds")
        u._check(v)
        u, v = u.values, v.values
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise UsageError(f"cosine_similarity: shapes {u.shape} != {v.shape}")
    du = float(u @ u)
    dv = float(v @ v)
    if np.sqrt(du) < 1e-12 or np.sqrt(dv) < 1e-12:
        return 0.0
    return float(np.clip((u @ v) / np.sqrt(du * dv), -1.0, 1.0))


class WeightingModel:
    """2-layer weighting network with per-task type embeddings.

    variant 'one-sim' feeds only the current task's similarity; 'all-sims'
    feeds the whole similarity vector. The input is
    [sim slice] ++ type_emb[task_id] ++ [loss value].
    """

    def __init__(self, num_aux, variant="all-sims", hidden_dim=32, type_dim=4,
                 rng=None):
        if variant not in ("one-sim", "all-sims"):
            raise ConfigError(f"unknown weighting variant '{variant}'")
        if rng is None:
            rng = np.random.default_rng(0)
        self.num_aux = num_aux
        self.variant = variant
        self.hidden_dim = hidden_dim
        self.type_dim = type_dim
        sim_width = 1 if variant == "one-sim" else num_aux + 1
        self.in_dim = sim_width + type_dim + 1
        bound1 = 1.0 / np.sqrt(self.in_dim)
        bound2 = 1.0 / np.sqrt(hidden_dim)
        self.registry = ParamRegistry("weighting")
        self.registry.register("W1", rng.uniform(-bound1, bound1, (self.in_dim, hidden_dim)))
        self.registry.register("b1", np.zeros(hidden_dim))
        self.registry.register("W2", rng.uniform(-bound2, bound2, (hidden_dim, 1)))
        self.registry.register("b2", np.full(1, _SOFTPLUS_INV_ONE))
        self.registry.register("type_emb", 0.1 * rng.standard_normal((num_aux + 1, type_dim)))
        self.registry.freeze()

    def signal_row(self, signals, task_id, zero_sims=False):
        """The non-learned part of the input: sims slice and loss value."""
        if task_id > signals.num_aux:
            raise UsageError(f"task_id {task_id} out of range (K={signals.num_aux})")
        if self.variant == "one-sim":
            sims = signals.sims[[task_id]]
        else:
            sims = signals.sims
        if zero_sims:
            sims = np.zeros_like(sims)
        return np.concatenate([sims, [signals.losses[task_id]]])

    def forward_tape(self, signals, task_id, zero_sims=False):
        """Weight for one task as a scalar tape node (for meta-gradients)."""
        row = self.signal_row(signals, task_id, zero_sims)
        sims_part = T.constant(row[:-1].reshape(1, -1), op="signals")
        loss_part = T.constant(row[-1:].reshape(1, 1), op="signals")
        emb = T.gather_rows(self.registry["type_emb"], np.array([task_id]))
        x = T.concat([sims_part, emb, loss_part], axis=1)
        h = T.relu(T.add(T.matmul(x, self.registry["W1"]), self.registry["b1"]))
        out = T.softplus(T.add(T.matmul(h, self.registry["W2"]), self.registry["b2"]))
        return T.tsum(out)

    def weight(self, signals, task_id, zero_sims=False):
        return float(self.forward_tape(signals, task_id, zero_sims).data)


def weight_forward(model, signals, task_id, zero_sims=False):
    """Strictly positive weight for one task (softplus output range)."""
    return model.weight(signals, task_id, zero_sims)


def joint_loss(weights, losses):
    """Weighted sum of per-task scalar loss nodes; weights are constants
    with respect to the GNN parameters."""
    if len(weights) != len(losses):
        raise UsageError(f"joint_loss: {len(weights)} weights vs {len(losses)} losses")
    total = None
    for w, loss in zip(weights, losses):
        term = T.mul(loss, float(w))
        total = term if total is None else T.add(total, term)
    return total


def meta_gradient(model, signals, per_task_shared_grads, theta, alpha,
                  sup_grad_fn, zero_sims=False):
    """Exact gradient of the post-virtual-step target loss w.r.t. the
    weighting parameters.

    Computes theta_hat = theta - alpha * sum_i g_i * grad_i, obtains
    u = grad of the target loss at theta_hat over the shared parameters
    (via ``sup_grad_fn``, evaluated on the meta split), and returns

        -alpha * sum_i (grad_i . u) * d g_i / dw,

    backpropagating through the weighting network only. ``theta`` is not
    mutated; sims and losses enter as constants.
    """
    if alpha <= 0:
        raise ConfigError(f"meta_gradient: alpha must be positive, got {alpha}")
    n_tasks = signals.num_aux + 1
    if len(per_task_shared_grads) != n_tasks:
        raise UsageError("meta_gradient: need one shared gradient per task")

    weight_nodes = [model.forward_tape(signals, i, zero_sims) for i in range(n_tasks)]
    update = np.zeros_like(theta.values)
    for node, grad in zip(weight_nodes, per_task_shared_grads):
        update += float(node.data) * grad.values
    theta_hat = ParamVector(theta.values - alpha * update, theta.layout)

    u = sup_grad_fn(theta_hat)
    if len(u.values) == 0:
        raise UsageError("meta_gradient: empty shared-parameter space")

    dots = [g.dot(u) for g in per_task_shared_grads]
    surrogate = None
    for dot, node in zip(dots, weight_nodes):
        term = T.mul(node, float(dot))
        surrogate = term if surrogate is None else T.add(surrogate, term)
    return model.registry.grad_vector(surrogate).scale(-alpha)


def meta_step(model, meta_grad, beta):
    """SGD step on all weighting parameters including type embeddings."""
    if beta <= 0:
        raise ConfigError(f"meta_step: beta must be positive, got {beta}")
    model.registry.set_vector(sgd_step(model.registry.to_vector(), meta_grad, beta))
    return model


def strategy_weights(strategy, signals, model=None):
    """K+1 task weights for one strategy.

    no-aux: target only. fixed: all ones. cosine-gate: adopt an auxiliary
    task iff its similarity is >= 0 (target always on). selar-like: the
    learned network with the similarity inputs zeroed (loss + type
    embedding only). aux-ts variants: the learned network as configured.
    """
    if strategy not in STRATEGIES:
        raise ConfigError(f"unknown strategy '{strategy}'")
    n_tasks = signals.num_aux + 1
    if strategy == "no-aux":
        out = np.zeros(n_tasks)
        out[0] = 1.0
        return out
    if strategy == "fixed":
        return np.ones(n_tasks)
    if strategy == "cosine-gate":
        out = np.where(signals.sims >= 0.0, 1.0, 0.0)
        out[0] = 1.0
        return out
    if model is None:
        raise ConfigError(f"strategy '{strategy}' needs a weighting model")
    want = strategy_variant(strategy)
    if model.variant != want:
        raise ConfigError(f"strategy '{strategy}' needs a '{want}' model, "
                          f"got '{model.variant}'")
    zero_sims = strategy == "selar-like"
    return np.array([model.weight(signals, i, zero_sims) for i in range(n_tasks)])
