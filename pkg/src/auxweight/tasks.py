"""Uniform task abstraction: batches, losses, and shared-parameter gradients.

Task id 0 is always the target task. Loss reduction is mean per batch so
magnitudes are batch-size invariant; ``loss_scale`` multiplies the final
value (and the gradient) as a pure rescale.
"""

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, UsageError
from .params import ParamVector, grad_vectors
from .sampling import mask_rows, sample_metapath_pairs, sample_negative_edges

TARGET_KINDS = ("node_classification", "link_prediction")
AUX_KINDS = ("edge_generation", "attribute_generation", "metapath_prediction")


# ---------------------------------------------------------------------------
# batches


@dataclass
class NodeBatch:
    """Node ids with class labels."""

    nodes: np.ndarray
    labels: np.ndarray

    @property
    def n_units(self):
        return len(self.nodes)

    def split(self, ratio, rng):
        from .sampling import split_batch
        order = np.arange(len(self.nodes))
        tr, mt = split_batch(order, ratio, rng)
        return (NodeBatch(self.nodes[tr], self.labels[tr]),
                NodeBatch(self.nodes[mt], self.labels[mt]))


@dataclass
class PairBatch:
    """Positive pairs with k grouped negatives per positive."""

    pos_pairs: np.ndarray
    neg_pairs: np.ndarray
    k: int

    @property
    def n_units(self):
        return len(self.pos_pairs)

    def all_pairs(self):
        return np.concatenate([self.pos_pairs, self.neg_pairs])

    def labels(self):
        return np.concatenate([np.ones(len(self.pos_pairs)),
                               np.zeros(len(self.neg_pairs))])

    def split(self, ratio, rng):
        from .sampling import split_batch
        order = np.arange(len(self.pos_pairs))
        tr, mt = split_batch(order, ratio, rng)
        neg = self.neg_pairs.reshape(len(self.pos_pairs), self.k, 2)
        return (PairBatch(self.pos_pairs[tr], neg[tr].reshape(-1, 2), self.k),
                PairBatch(self.pos_pairs[mt], neg[mt].reshape(-1, 2), self.k))


@dataclass
class LabeledPairBatch:
    """Explicitly labeled pairs (meta-path prediction)."""

    pairs: np.ndarray
    labels: np.ndarray

    @property
    def n_units(self):
        return len(self.pairs)


@dataclass
class MaskBatch:
    """Masked node ids, reconstruction targets, and the masked feature matrix."""

    nodes: np.ndarray
    targets: np.ndarray
    features: np.ndarray

    @property
    def n_units(self):
        return len(self.nodes)


# ---------------------------------------------------------------------------
# loss primitives


def cross_entropy_mean(logits, labels):
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) == 0:
        raise UsageError("cross_entropy_mean: empty batch")
    num_classes = logits.shape[1]
    if labels.min() < 0 or labels.max() >= num_classes:
        raise UsageError(f"labels must be class ids below {num_classes}")
    onehot = np.zeros(logits.shape)
    onehot[np.arange(len(labels)), labels] = 1.0
    picked = T.tsum(T.mul(T.log_softmax(logits), T.constant(onehot)))
    return T.mul(T.neg(picked), 1.0 / len(labels))


def bce_with_logits_mean(logits, labels):
    labels = np.asarray(labels, dtype=np.float64)
    if labels.size == 0:
        raise UsageError("bce_with_logits_mean: empty batch")
    # mean(softplus(z) - z*y): the numerically stable binary cross-entropy
    return T.tmean(T.sub(T.softplus(logits), T.mul(logits, T.constant(labels))))


def mse_mean(pred, targets):
    if pred.data.size == 0:
        raise UsageError("mse_mean: empty batch")
    diff = T.sub(pred, T.constant(targets))
    return T.tmean(T.mul(diff, diff))


# ---------------------------------------------------------------------------
# task spec


@dataclass
class TaskSpec:
    """One target (task_id 0) or auxiliary task."""

    task_id: int
    kind: str
    head: object
    sampler: object = None
    loss_scale: float = 1.0
    name: str = ""

    def __post_init__(self):
        if self.loss_scale <= 0:
            raise ConfigError(f"loss_scale must be positive, got {self.loss_scale}")
        if self.kind not in TARGET_KINDS + AUX_KINDS:
            raise ConfigError(f"unknown task kind '{self.kind}'")
        if not self.name:
            self.name = self.kind

    def draw(self):
        return self.sampler()


def base_loss(task, encoder, g, batch, dropout_rng=None, force_sparse=False):
    """Unscaled loss tape node for one task on one batch."""
    features = batch.features if isinstance(batch, MaskBatch) else None
    z = encoder.encode(g, features=features, dropout_rng=dropout_rng,
                       force_sparse=force_sparse)
    if task.kind == "node_classification":
        return cross_entropy_mean(task.head.forward(z, batch.nodes), batch.labels)
    if task.kind in ("link_prediction", "edge_generation"):
        scores = task.head.forward(z, batch.all_pairs())
        return bce_with_logits_mean(scores, batch.labels())
    if task.kind == "metapath_prediction":
        logits = task.head.forward(z, batch.pairs)
        return bce_with_logits_mean(logits, batch.labels)
    if task.kind == "attribute_generation":
        if batch.n_units == 0:
            raise UsageError("attribute_generation: no masked nodes")
        return mse_mean(task.head.forward(z, batch.nodes), batch.targets)
    raise ConfigError(f"unknown task kind '{task.kind}'")


def task_loss(task, encoder, g, batch, dropout_rng=None):
    """Scaled loss tape node (loss_scale applied on the tape)."""
    return T.mul(base_loss(task, encoder, g, batch, dropout_rng), task.loss_scale)


@dataclass
class TaskEval:
    """One task's loss value and gradients, loss_scale already applied."""

    loss: float
    shared_grad: ParamVector
    head_grad: ParamVector


def task_gradient(task, encoder, g, batch):
    """Loss plus gradient over the shared encoder parameters only.

    Head gradients are computed too but kept separate. Dropout stays off so
    the result is a pure function of (parameters, batch). The loss_scale
    multiplies the base loss and gradients coordinate-wise, which keeps
    rescaled runs exact multiples of unit-scale runs.
    """
    base = base_loss(task, encoder, g, batch, dropout_rng=None)
    shared, head = grad_vectors(base, [encoder.registry, task.head.registry])
    s = task.loss_scale
    return TaskEval(loss=float(base.data) * s,
                    shared_grad=shared.scale(s),
                    head_grad=head.scale(s))


# ---------------------------------------------------------------------------
# batch samplers


class NodeClassBatcher:
    """Uniform node batches (without replacement) from a labeled pool."""

    def __init__(self, g, pool, batch_size, rng):
        if len(pool) == 0:
            raise ConfigError("empty node pool for node classification")
        if g.labels is None or (g.labels[pool] < 0).any():
            raise ConfigError("node classification target requires labels on the pool")
        self.g = g
        self.pool = np.asarray(pool)
        self.batch_size = batch_size
        self.rng = rng

    def __call__(self):
        m = min(self.batch_size, len(self.pool))
        nodes = self.rng.choice(self.pool, size=m, replace=False)
        return NodeBatch(nodes=nodes, labels=self.g.labels[nodes])


class LinkPredBatcher:
    """Positive pairs from a fixed pool plus k sampled non-edges each."""

    def __init__(self, g, pos_pairs, batch_size, k, rng):
        if len(pos_pairs) == 0:
            raise ConfigError("empty positive-pair pool for link prediction")
        self.g = g
        self.pos_pairs = np.asarray(pos_pairs)
        self.batch_size = batch_size
        self.k = k
        self.rng = rng

    def __call__(self):
        m = min(self.batch_size, len(self.pos_pairs))
        take = self.rng.choice(len(self.pos_pairs), size=m, replace=False)
        pos = self.pos_pairs[take]
        neg = sample_negative_edges(self.g, pos, self.k, self.rng)
        return PairBatch(pos_pairs=pos, neg_pairs=neg, k=self.k)


class EdgeGenBatcher(LinkPredBatcher):
    """Link prediction over the graph's own edges (self-supervised)."""


class AttrGenBatcher:
    """Masked-attribute batches: zero the batch rows, reconstruct originals."""

    def __init__(self, g, pool, batch_size, rng):
        if len(pool) == 0:
            raise ConfigError("empty node pool for attribute generation")
        self.g = g
        self.pool = np.asarray(pool)
        self.batch_size = batch_size
        self.rng = rng

    def __call__(self):
        m = min(self.batch_size, len(self.pool))
        nodes = np.sort(self.rng.choice(self.pool, size=m, replace=False))
        features, targets = mask_rows(self.g.features, nodes)
        return MaskBatch(nodes=nodes, targets=targets, features=features)


class MetaPathBatcher:
    """Fresh walk-sampled positives and type-matched negatives each step."""

    def __init__(self, g, metapath, n_pos, n_neg, rng):
        self.g = g
        self.metapath = metapath
        self.n_pos = n_pos
        self.n_neg = n_neg
        self.rng = rng

    def __call__(self):
        pairs, labels = sample_metapath_pairs(self.g, self.metapath,
                                              self.n_pos, self.n_neg, self.rng)
        return LabeledPairBatch(pairs=pairs, labels=labels)
