"""Graph representation, file ingestion, synthetic generators, and splits.

Graphs are undirected, stored in CSR form with both edge directions, and
immutable after construction. Node ids in edge/label files are 0-based
row indices into the feature file.
"""

from collections import namedtuple
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, IngestionError

Csr = namedtuple("Csr", "offsets indices values")


class Graph:
    """Typed nodes/edges in CSR form with features and optional labels."""

    def __init__(self, num_nodes, src, dst, features, labels=None,
                 node_type=None, edge_type=None,
                 node_type_names=None, edge_type_names=None, id_map=None):
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        features = np.asarray(features, dtype=np.float64)
        if features.shape[0] != num_nodes:
            raise ConfigError(f"feature rows {features.shape[0]} != num_nodes {num_nodes}")
        if len(src) and (src.min() < 0 or src.max() >= num_nodes
                         or dst.min() < 0 or dst.max() >= num_nodes):
            raise ConfigError("edge endpoint outside [0, num_nodes)")

        # Symmetrize and deduplicate directed pairs; CSR rows sorted by (u, v).
        et = None if edge_type is None else np.asarray(edge_type, dtype=np.int64)
        all_src = np.concatenate([src, dst])
        all_dst = np.concatenate([dst, src])
        all_et = None if et is None else np.concatenate([et, et])
        keys = all_src * num_nodes + all_dst
        keys, order = np.unique(keys, return_index=True)
        self.num_nodes = int(num_nodes)
        self.indices = (keys % num_nodes).astype(np.int64)
        rows = (keys // num_nodes).astype(np.int64)
        self.offsets = np.zeros(num_nodes + 1, dtype=np.int64)
        np.add.at(self.offsets, rows + 1, 1)
        self.offsets = np.cumsum(self.offsets)
        self.edge_type = None if all_et is None else all_et[order]
        self.features = features
        self.labels = None if labels is None else np.asarray(labels, dtype=np.int64)
        self.node_type = None if node_type is None else np.asarray(node_type, dtype=np.int64)
        self.node_type_names = node_type_names
        self.edge_type_names = edge_type_names
        self.id_map = id_map
        self._norm_dense = None
        self._norm_csr = None
        self._edge_set = None

    @property
    def num_edges(self):
        """Directed edge count (undirected edges count twice)."""
        return len(self.indices)

    @property
    def feature_dim(self):
        return self.features.shape[1]

    def neighbors(self, u):
        return self.indices[self.offsets[u]:self.offsets[u + 1]]

    def neighbor_edge_types(self, u):
        if self.edge_type is None:
            return None
        return self.edge_type[self.offsets[u]:self.offsets[u + 1]]

    def edge_pairs(self):
        """Unique undirected pairs (u, v) with u < v, as an (m, 2) array."""
        rows = np.repeat(np.arange(self.num_nodes), np.diff(self.offsets))
        keep = rows < self.indices
        return np.stack([rows[keep], self.indices[keep]], axis=1)

    def edge_key_set(self):
        """Set of u*num_nodes+v keys for O(1) directed-edge membership."""
        if self._edge_set is None:
            rows = np.repeat(np.arange(self.num_nodes), np.diff(self.offsets))
            self._edge_set = frozenset((rows * self.num_nodes + self.indices).tolist())
        return self._edge_set

    def has_edge(self, u, v):
        return u * self.num_nodes + v in self.edge_key_set()

    def nodes_of_type(self, t):
        if self.node_type is None:
            raise ConfigError("graph has no node types")
        return np.flatnonzero(self.node_type == t)

    def type_id(self, name):
        if self.node_type_names is None:
            raise ConfigError("graph has no node type names")
        return self.node_type_names.index(name)


def normalized_adjacency(g):
    """Dense symmetric normalized adjacency with self-loops, cached."""
    if g._norm_dense is None:
        a = np.zeros((g.num_nodes, g.num_nodes))
        rows = np.repeat(np.arange(g.num_nodes), np.diff(g.offsets))
        a[rows, g.indices] = 1.0
        a[np.diag_indices_from(a)] = 1.0
        dinv = 1.0 / np.sqrt(a.sum(axis=1))
        g._norm_dense = a * dinv[:, None] * dinv[None, :]
    return g._norm_dense


def normalized_adjacency_csr(g):
    """CSR form of the normalized adjacency (self-loops included), cached."""
    if g._norm_csr is None:
        deg = np.diff(g.offsets) + 1.0
        dinv = 1.0 / np.sqrt(deg)
        # splice the self-loop into each sorted row segment
        dst, val = [], []
        for u in range(g.num_nodes):
            nbrs = g.indices[g.offsets[u]:g.offsets[u + 1]]
            row = np.insert(nbrs, np.searchsorted(nbrs, u), u)
            dst.append(row)
            val.append(dinv[u] * dinv[row])
        offsets = np.zeros(g.num_nodes + 1, dtype=np.int64)
        offsets[1:] = np.cumsum([len(r) for r in dst])
        g._norm_csr = Csr(offsets, np.concatenate(dst).astype(np.int64),
                          np.concatenate(val))
    return g._norm_csr


def adjacency_csr(g):
    """Raw adjacency in CSR form with unit values (no self-loops)."""
    return Csr(g.offsets, g.indices, np.ones(len(g.indices)))


def dense_adjacency(g):
    a = np.zeros((g.num_nodes, g.num_nodes))
    rows = np.repeat(np.arange(g.num_nodes), np.diff(g.offsets))
    a[rows, g.indices] = 1.0
    return a


# ---------------------------------------------------------------------------
# synthetic generators


def generate_sbm(blocks, p_in, p_out, feature_dim, noise, seed):
    """Stochastic block model with one-hot-plus-noise features.

    Node label is the block id; features are one-hot(block) in the first
    ``len(blocks)`` columns plus N(0, noise^2) on every column.
    """
    blocks = list(blocks)
    if not blocks or any(b <= 0 for b in blocks):
        raise ConfigError(f"blocks must be positive sizes, got {blocks}")
    if not (0.0 <= p_out < p_in <= 1.0):
        raise ConfigError(f"need 0 <= p_out < p_in <= 1, got p_in={p_in} p_out={p_out}")
    if feature_dim < len(blocks):
        raise ConfigError(f"feature_dim {feature_dim} < number of blocks {len(blocks)}")
    rng = np.random.default_rng(seed)
    n = sum(blocks)
    label = np.repeat(np.arange(len(blocks)), blocks)
    prob = np.where(label[:, None] == label[None, :], p_in, p_out)
    upper = np.triu(rng.random((n, n)) < prob, k=1)
    src, dst = np.nonzero(upper)
    features = np.zeros((n, feature_dim))
    features[np.arange(n), label] = 1.0
    features += noise * rng.standard_normal((n, feature_dim))
    return Graph(n, src, dst, features, labels=label)


def generate_user_item(n_users, n_items, n_genres, p_in=0.2, p_out=0.01,
                       noise=0.2, seed=0):
    """Bipartite user-item graph with item-genre links and latent communities.

    Users and items carry a latent community in [0, n_genres); user-item
    edges are dense within a community, sparse across. An item's genre is
    its community, so genre nodes tie community members together. Node
    types: user=0, item=1, genre=2; edge types: user-item=0, item-genre=1.
    """
    if min(n_users, n_items, n_genres) <= 0:
        raise ConfigError("n_users, n_items, n_genres must be positive")
    rng = np.random.default_rng(seed)
    n = n_users + n_items + n_genres
    user_ids = np.arange(n_users)
    item_ids = n_users + np.arange(n_items)
    genre_ids = n_users + n_items + np.arange(n_genres)
    user_com = rng.integers(0, n_genres, size=n_users)
    item_com = rng.integers(0, n_genres, size=n_items)
    prob = np.where(user_com[:, None] == item_com[None, :], p_in, p_out)
    uu, ii = np.nonzero(rng.random((n_users, n_items)) < prob)
    src = np.concatenate([user_ids[uu], item_ids])
    dst = np.concatenate([item_ids[ii], genre_ids[item_com]])
    edge_type = np.concatenate([np.zeros(len(uu), dtype=np.int64),
                                np.ones(n_items, dtype=np.int64)])
    node_type = np.concatenate([np.zeros(n_users, dtype=np.int64),
                                np.ones(n_items, dtype=np.int64),
                                np.full(n_genres, 2, dtype=np.int64)])
    com = np.concatenate([user_com, item_com, np.arange(n_genres)])
    features = np.zeros((n, 3 + n_genres))
    features[np.arange(n), node_type] = 1.0
    features[np.arange(n), 3 + com] = 1.0
    features += noise * rng.standard_normal(features.shape)
    return Graph(n, src, dst, features, node_type=node_type, edge_type=edge_type,
                 node_type_names=["user", "item", "genre"],
                 edge_type_names=["user-item", "item-genre"])


# ---------------------------------------------------------------------------
# file ingestion


def load_graph(edge_file, feature_file, label_file=None):
    """Load a graph from edge TSV + feature CSV (+ optional label TSV).

    Edge rows are ``src<TAB>dst[<TAB>edge_type]``; node ids are 0-based
    feature-row indices. Duplicate edges collapse during CSR construction.
    """
    features = []
    width = None
    with open(feature_file) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            row = [float(x) for x in line.split(",")]
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise IngestionError(
                    f"{feature_file}:{lineno}: ragged feature row "
                    f"({len(row)} values, expected {width})")
            features.append(row)
    features = np.asarray(features, dtype=np.float64)
    n = len(features)

    src, dst, etypes = [], [], []
    with open(edge_file) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            parts = line.split("\t")
            u, v = int(parts[0]), int(parts[1])
            for node in (u, v):
                if not 0 <= node < n:
                    raise IngestionError(
                        f"{edge_file}: node id {node} has no feature row "
                        f"(features define {n} nodes)")
            src.append(u)
            dst.append(v)
            if len(parts) > 2:
                etypes.append(int(parts[2]))
    edge_type = np.asarray(etypes, dtype=np.int64) if etypes else None
    if edge_type is not None and len(edge_type) != len(src):
        raise IngestionError(f"{edge_file}: edge_type column present on some rows only")

    labels = None
    if label_file is not None:
        labels = np.full(n, -1, dtype=np.int64)
        with open(label_file) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                node_s, label_s = line.split("\t")
                node = int(node_s)
                if not 0 <= node < n:
                    raise IngestionError(
                        f"{label_file}: node id {node} has no feature row")
                labels[node] = int(label_s)

    id_map = np.stack([np.arange(n), np.arange(n)], axis=1)
    return Graph(n, np.asarray(src, dtype=np.int64), np.asarray(dst, dtype=np.int64),
                 features, labels=labels, edge_type=edge_type, id_map=id_map)


def write_graph(g, edge_file, feature_file, label_file=None):
    """Write a graph back out in the load_graph file formats."""
    pairs = g.edge_pairs()
    with open(edge_file, "w") as fh:
        for u, v in pairs:
            if g.edge_type is not None:
                jj = g.offsets[u] + np.searchsorted(g.neighbors(u), v)
                fh.write(f"{u}\t{v}\t{g.edge_type[jj]}\n")
            else:
                fh.write(f"{u}\t{v}\n")
    with open(feature_file, "w") as fh:
        for row in g.features:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")
    if label_file is not None and g.labels is not None:
        with open(label_file, "w") as fh:
            for node, label in enumerate(g.labels):
                if label >= 0:
                    fh.write(f"{node}\t{label}\n")


def save_id_map(g, path):
    if g.id_map is None:
        raise ConfigError("graph has no id map (not loaded from files)")
    with open(path, "w") as fh:
        for orig, dense in g.id_map:
            fh.write(f"{orig}\t{dense}\n")


# ---------------------------------------------------------------------------
# splits and meta-paths


@dataclass
class DataSplit:
    """Disjoint train/valid/test index sets plus the optional P&F partition."""

    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray
    pretrain: np.ndarray = None
    finetune: np.ndarray = None

    def check(self, universe_size):
        parts = [self.train, self.valid, self.test]
        allidx = np.concatenate(parts)
        if len(np.unique(allidx)) != len(allidx):
            raise ConfigError("split parts overlap")
        if len(allidx) and (allidx.min() < 0 or allidx.max() >= universe_size):
            raise ConfigError("split index outside universe")
        return self


def split_indices(indices, seed, scheme="mtl", pretrain_fraction=0.7,
                  same_graph_pretrain=False):
    """Partition an index set for one transfer scheme.

    MTL: shuffle then 1/3 train, 1/3 valid, 1/3 test. P&F: hold out
    ``pretrain_fraction`` for pre-training and split the remainder in
    thirds; with ``same_graph_pretrain`` the pretrain pool is the full set
    (small-graph protocol) while train/valid/test still come from the
    remainder.
    """
    indices = np.asarray(indices, dtype=np.int64)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(indices)
    if scheme == "mtl":
        thirds = np.array_split(perm, 3)
        return DataSplit(train=thirds[0], valid=thirds[1], test=thirds[2])
    if scheme != "pf":
        raise ConfigError(f"unknown scheme '{scheme}'")
    n_pre = int(round(pretrain_fraction * len(perm)))
    pre, rest = perm[:n_pre], perm[n_pre:]
    thirds = np.array_split(rest, 3)
    if same_graph_pretrain:
        pre = perm
    return DataSplit(train=thirds[0], valid=thirds[1], test=thirds[2],
                     pretrain=pre, finetune=rest)


@dataclass
class MetaPath:
    """A typed walk pattern: node type sequence plus optional edge types."""

    node_types: list
    edge_types: list = None
    name: str = ""

    def __post_init__(self):
        if len(self.node_types) < 2:
            raise ConfigError("meta-path needs at least two node types")
        if self.edge_types is not None and len(self.edge_types) != len(self.node_types) - 1:
            raise ConfigError("meta-path edge type count must be hops count")

    @classmethod
    def from_names(cls, g, names):
        return cls(node_types=[g.type_id(x) for x in names], name="-".join(names))

    def __len__(self):
        return len(self.node_types)
