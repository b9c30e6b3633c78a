"""GNN encoders, task heads, and checkpoint files.

The encoder owns the shared parameters every task differentiates through;
each head owns its task-specific parameters in a separate registry so the
shared/task-specific partition is explicit.
"""

import json

import numpy as np

from . import tensor as T
from .errors import ConfigError, UsageError
from .graphs import (adjacency_csr, dense_adjacency, normalized_adjacency,
                     normalized_adjacency_csr)
from .params import ParamRegistry

DEFAULT_SPARSE_THRESHOLD = 5000


def uniform_init(rng, fan_in, shape):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def _activation(name):
    if name == "relu":
        return T.relu
    if name == "linear":
        return lambda x: x
    raise ConfigError(f"unknown activation '{name}'")


class GnnEncoder:
    """Stack of GCN or GIN layers producing node embeddings.

    GCN layer: act(normadj @ H @ W + b). GIN layer (eps fixed at 0):
    act(MLP(H + A @ H)) with a 2-layer ReLU MLP. Aggregation switches to
    the CSR kernel above ``sparse_threshold`` nodes.
    """

    def __init__(self, kind, in_dim, hidden_dims, rng, activation="relu",
                 dropout=0.2, sparse_threshold=DEFAULT_SPARSE_THRESHOLD):
        if kind not in ("gcn", "gin"):
            raise ConfigError(f"unknown encoder kind '{kind}'")
        self.kind = kind
        self.dims = [in_dim] + list(hidden_dims)
        self.activation = activation
        self._act = _activation(activation)
        self.dropout = dropout
        self.sparse_threshold = sparse_threshold
        self.registry = ParamRegistry("encoder")
        for layer, (d_in, d_out) in enumerate(zip(self.dims[:-1], self.dims[1:])):
            if kind == "gcn":
                self.registry.register(f"layer{layer}.W", uniform_init(rng, d_in, (d_in, d_out)))
                self.registry.register(f"layer{layer}.b", np.zeros(d_out))
            else:
                self.registry.register(f"layer{layer}.W1", uniform_init(rng, d_in, (d_in, d_out)))
                self.registry.register(f"layer{layer}.b1", np.zeros(d_out))
                self.registry.register(f"layer{layer}.W2", uniform_init(rng, d_out, (d_out, d_out)))
                self.registry.register(f"layer{layer}.b2", np.zeros(d_out))
        self.registry.freeze()

    @property
    def out_dim(self):
        return self.dims[-1]

    def _aggregate(self, g, h, normalized, force_sparse=False):
        if force_sparse or g.num_nodes > self.sparse_threshold:
            csr = normalized_adjacency_csr(g) if normalized else adjacency_csr(g)
            return T.spmm_sym(csr, h)
        mat = normalized_adjacency(g) if normalized else dense_adjacency(g)
        return T.matmul(T.constant(mat, op="adjacency"), h)

    def encode(self, g, features=None, dropout_rng=None, force_sparse=False):
        """Embed every node; dropout only applies when a generator is passed."""
        x = g.features if features is None else features
        if x.shape[1] != self.dims[0]:
            raise ConfigError(
                f"encoder expects {self.dims[0]} feature columns, got {x.shape[1]}")
        h = T.constant(x, op="features")
        n_layers = len(self.dims) - 1
        for layer in range(n_layers):
            if self.kind == "gcn":
                w = self.registry[f"layer{layer}.W"]
                b = self.registry[f"layer{layer}.b"]
                h = self._act(T.add(self._aggregate(g, T.matmul(h, w), True, force_sparse), b))
            else:
                w1 = self.registry[f"layer{layer}.W1"]
                b1 = self.registry[f"layer{layer}.b1"]
                w2 = self.registry[f"layer{layer}.W2"]
                b2 = self.registry[f"layer{layer}.b2"]
                msg = T.add(h, self._aggregate(g, h, False, force_sparse))
                inner = T.relu(T.add(T.matmul(msg, w1), b1))
                h = self._act(T.add(T.matmul(inner, w2), b2))
            if dropout_rng is not None and self.dropout > 0.0 and layer < n_layers - 1:
                keep = dropout_rng.random(h.shape) >= self.dropout
                h = T.mul(h, T.constant(keep / (1.0 - self.dropout), op="dropout"))
        return h


# ---------------------------------------------------------------------------
# task heads


class NodeClassifierHead:
    """Linear classifier over node embeddings."""

    kind = "node-classifier"

    def __init__(self, in_dim, num_classes, rng, name="head"):
        self.num_classes = num_classes
        self.registry = ParamRegistry(name)
        self.registry.register("W", uniform_init(rng, in_dim, (in_dim, num_classes)))
        self.registry.register("b", np.zeros(num_classes))
        self.registry.freeze()

    def forward(self, z, nodes):
        if len(nodes) == 0:
            raise UsageError("node-classifier: empty batch")
        zb = T.gather_rows(z, nodes)
        return T.add(T.matmul(zb, self.registry["W"]), self.registry["b"])


class EdgeScorerHead:
    """Parameter-free dot-product scorer for node pairs."""

    kind = "edge-scorer"

    def __init__(self, name="head"):
        self.registry = ParamRegistry(name)
        self.registry.freeze()

    def forward(self, z, pairs):
        if len(pairs) == 0:
            raise UsageError("edge-scorer: empty batch")
        zu = T.gather_rows(z, pairs[:, 0])
        zv = T.gather_rows(z, pairs[:, 1])
        return T.tsum(T.mul(zu, zv), axis=1)


class AttributeDecoderHead:
    """Linear decoder reconstructing feature rows from embeddings."""

    kind = "attribute-decoder"

    def __init__(self, in_dim, feature_dim, rng, name="head"):
        self.registry = ParamRegistry(name)
        self.registry.register("W", uniform_init(rng, in_dim, (in_dim, feature_dim)))
        self.registry.register("b", np.zeros(feature_dim))
        self.registry.freeze()

    def forward(self, z, nodes):
        if len(nodes) == 0:
            raise UsageError("attribute-decoder: empty batch")
        zb = T.gather_rows(z, nodes)
        return T.add(T.matmul(zb, self.registry["W"]), self.registry["b"])


class PairClassifierHead:
    """2-layer MLP over concatenated endpoint embeddings, one logit per pair."""

    kind = "pair-classifier"

    def __init__(self, in_dim, hidden_dim, rng, name="head"):
        self.registry = ParamRegistry(name)
        self.registry.register("W1", uniform_init(rng, 2 * in_dim, (2 * in_dim, hidden_dim)))
        self.registry.register("b1", np.zeros(hidden_dim))
        self.registry.register("W2", uniform_init(rng, hidden_dim, (hidden_dim, 1)))
        self.registry.register("b2", np.zeros(1))
        self.registry.freeze()

    def forward(self, z, pairs):
        if len(pairs) == 0:
            raise UsageError("pair-classifier: empty batch")
        zu = T.gather_rows(z, pairs[:, 0])
        zv = T.gather_rows(z, pairs[:, 1])
        h = T.relu(T.add(T.matmul(T.concat([zu, zv], axis=1), self.registry["W1"]),
                         self.registry["b1"]))
        logits = T.add(T.matmul(h, self.registry["W2"]), self.registry["b2"])
        return T.tsum(logits, axis=1)


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(stem, named_arrays, meta):
    """Write ``<stem>.bin`` (little-endian float64) + ``<stem>.manifest.json``.

    The manifest lists name -> offset (in float64 units) and shape for every
    parameter, plus caller metadata (encoder kind, step counter, fingerprint).
    """
    entries = []
    offset = 0
    blobs = []
    for name, arr in named_arrays.items():
        arr = np.asarray(arr, dtype=np.float64)
        entries.append({"name": name, "offset": offset, "shape": list(arr.shape)})
        blobs.append(arr.astype("<f8").tobytes())
        offset += arr.size
    with open(f"{stem}.bin", "wb") as fh:
        fh.write(b"".join(blobs))
    with open(f"{stem}.manifest.json", "w") as fh:
        json.dump({"meta": meta, "total": offset, "entries": entries}, fh,
                  indent=1, sort_keys=True)
        fh.write("\n")


def load_checkpoint(stem):
    """Read back a checkpoint; returns (name -> array, meta)."""
    with open(f"{stem}.manifest.json") as fh:
        manifest = json.load(fh)
    raw = np.fromfile(f"{stem}.bin", dtype="<f8")
    if len(raw) != manifest["total"]:
        raise ConfigError(f"checkpoint {stem}: binary size does not match manifest")
    arrays = {}
    for entry in manifest["entries"]:
        size = int(np.prod(entry["shape"])) if entry["shape"] else 1
        chunk = raw[entry["offset"]:entry["offset"] + size]
        arrays[entry["name"]] = chunk.astype(np.float64).reshape(entry["shape"])
    return arrays, manifest["meta"]
