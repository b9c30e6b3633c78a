import numpy as np
import pytest

from auxweight import tensor as T
from auxweight.errors import ConfigError, UsageError
from auxweight.graphs import Graph, generate_sbm, normalized_adjacency
from auxweight.models import (EdgeScorerHead, GnnEncoder, NodeClassifierHead,
                              PairClassifierHead, load_checkpoint,
                              save_checkpoint)
from auxweight.params import finite_diff_grad


def small_graph(seed=0, n1=5, n2=5, dim=4):
    return generate_sbm([n1, n2], 0.5, 0.2, feature_dim=dim, noise=0.3, seed=seed)


def test_single_linear_gcn_layer_is_normalized_propagation():
    g = small_graph(dim=4)
    enc = GnnEncoder("gcn", 4, [4], rng=np.random.default_rng(0),
                     activation="linear", dropout=0.0)
    enc.registry["layer0.W"].data = np.eye(4)
    z = enc.encode(g)
    assert np.array_equal(z.data, normalized_adjacency(g) @ g.features)


def test_isolated_node_sees_only_itself():
    # node 4 isolated; perturbing other features must not move its embedding
    g1 = Graph(5, [0, 1, 2], [1, 2, 3], np.arange(10.0).reshape(5, 2))
    feats2 = g1.features.copy()
    feats2[:4] += 1.0
    g2 = Graph(5, [0, 1, 2], [1, 2, 3], feats2)
    enc = GnnEncoder("gcn", 2, [8, 8], rng=np.random.default_rng(1), dropout=0.0)
    z1 = enc.encode(g1).data
    z2 = enc.encode(g2).data
    assert np.array_equal(z1[4], z2[4])


def test_feature_dim_mismatch_is_config_error():
    g = small_graph(dim=4)
    enc = GnnEncoder("gcn", 7, [4], rng=np.random.default_rng(0))
    with pytest.raises(ConfigError):
        enc.encode(g)


@pytest.mark.parametrize("kind", ["gcn", "gin"])
def test_encoder_gradients_match_finite_differences(kind):
    g = small_graph(seed=2, dim=3)
    enc = GnnEncoder(kind, 3, [6, 5], rng=np.random.default_rng(3), dropout=0.0)
    target = np.random.default_rng(4).standard_normal((g.num_nodes, 5))

    def loss_at(vec):
        enc.registry.set_vector(vec)
        diff = T.sub(enc.encode(g), T.constant(target))
        return T.tmean(T.mul(diff, diff))

    at = enc.registry.to_vector()
    grad = enc.registry.grad_vector(loss_at(at))
    fd = finite_diff_grad(lambda v: float(loss_at(v).data), at, eps=1e-6)
    enc.registry.set_vector(at)
    assert np.linalg.norm(grad.values - fd.values) / np.linalg.norm(fd.values) <= 1e-5


def _quantize(a, scale=256.0):
    return np.round(a * scale) / scale


def _three_regular_graph(n=20):
    # circulant: ring edges + chords at distance n/2 make every degree 3
    src = list(range(n)) + list(range(n))
    dst = [(i + 1) % n for i in range(n)] + [(i + n // 2) % n for i in range(n)]
    return src, dst


def test_permutation_equivariance_exact_on_dyadic_inputs():
    # a 3-regular graph has degree+1 = 4 everywhere, so the normalized
    # adjacency entries are exactly 0.25 and all arithmetic is dyadic:
    # permuting node ids permutes embeddings with no rounding at all
    rng = np.random.default_rng(7)
    n = 20
    src, dst = _three_regular_graph(n)
    feats = _quantize(rng.standard_normal((n, 6)))
    g = Graph(n, src, dst, feats)
    enc = GnnEncoder("gcn", 6, [8, 8], rng=rng, dropout=0.0)
    for name, _, _ in enc.registry.layout:
        enc.registry[name].data = _quantize(enc.registry[name].data)
    z = enc.encode(g).data

    perm = rng.permutation(n)
    src_p = [perm[u] for u in src]
    dst_p = [perm[v] for v in dst]
    feats_p = np.empty_like(feats)
    feats_p[perm] = feats
    gp = Graph(n, src_p, dst_p, feats_p)
    zp = enc.encode(gp).data
    assert np.array_equal(zp[perm], z)


@pytest.mark.parametrize("kind", ["gcn", "gin"])
def test_permutation_equivariance_general(kind):
    rng = np.random.default_rng(8)
    g = small_graph(seed=8, dim=4)
    enc = GnnEncoder(kind, 4, [8, 8], rng=rng, dropout=0.0)
    z = enc.encode(g).data
    perm = rng.permutation(g.num_nodes)
    rows = np.repeat(np.arange(g.num_nodes), np.diff(g.offsets))
    feats_p = np.empty_like(g.features)
    feats_p[perm] = g.features
    gp = Graph(g.num_nodes, perm[rows], perm[g.indices], feats_p)
    zp = enc.encode(gp).data
    assert np.allclose(zp[perm], z, rtol=1e-10, atol=1e-12)


def test_sparse_and_dense_aggregation_agree():
    g = generate_sbm([15, 15], 0.3, 0.05, feature_dim=4, noise=0.2, seed=9)
    enc = GnnEncoder("gcn", 4, [8, 8], rng=np.random.default_rng(10), dropout=0.0)
    dense = enc.encode(g).data
    sparse = enc.encode(g, force_sparse=True).data
    assert np.allclose(dense, sparse, rtol=1e-12, atol=1e-12)


def test_edge_scorer_unit_vectors():
    z = T.constant(np.array([[1.0, 0.0], [1.0, 0.0]]))
    head = EdgeScorerHead()
    score = head.forward(z, np.array([[0, 1]]))
    assert score.data[0] == 1.0
    assert head.registry.size == 0


def test_node_classifier_zero_weights_uniform():
    head = NodeClassifierHead(4, 3, np.random.default_rng(0))
    head.registry["W"].data = np.zeros((4, 3))
    z = T.constant(np.random.default_rng(1).standard_normal((5, 4)))
    logits = head.forward(z, np.arange(5))
    probs = np.exp(logits.data) / np.exp(logits.data).sum(axis=1, keepdims=True)
    assert np.allclose(probs, 1.0 / 3.0, atol=1e-15)


def test_pair_classifier_matches_dense_evaluation():
    rng = np.random.default_rng(2)
    head = PairClassifierHead(3, 4, rng)
    z = rng.standard_normal((6, 3))
    pairs = np.array([[0, 1], [2, 5], [4, 4]])
    out = head.forward(T.constant(z), pairs).data
    w1 = head.registry["W1"].data
    b1 = head.registry["b1"].data
    w2 = head.registry["W2"].data
    b2 = head.registry["b2"].data
    for row, (u, v) in zip(out, pairs):
        x = np.concatenate([z[u], z[v]])
        h = np.maximum(x @ w1 + b1, 0.0)
        assert abs(row - float((h @ w2 + b2)[0])) <= 1e-12


def test_head_empty_batch_is_usage_error():
    head = NodeClassifierHead(4, 2, np.random.default_rng(0))
    with pytest.raises(UsageError):
        head.forward(T.constant(np.zeros((3, 4))), np.array([], dtype=np.int64))


def test_encoder_and_head_parameters_are_disjoint():
    enc = GnnEncoder("gcn", 4, [8], rng=np.random.default_rng(0))
    head = NodeClassifierHead(8, 3, np.random.default_rng(1), name="head.target")
    enc_ids = {id(t) for t in enc.registry.leaves()}
    head_ids = {id(t) for t in head.registry.leaves()}
    assert not enc_ids & head_ids


def test_checkpoint_save_load_save_is_byte_identical(tmp_path):
    rng = np.random.default_rng(3)
    arrays = {"encoder.layer0.W": rng.standard_normal((4, 8)),
              "encoder.layer0.b": rng.standard_normal(8),
              "head.target.W": rng.standard_normal((8, 3))}
    meta = {"encoder_kind": "gcn", "step": 17}
    a = tmp_path / "a"
    b = tmp_path / "b"
    save_checkpoint(str(a), arrays, meta)
    loaded, meta2 = load_checkpoint(str(a))
    assert meta2 == meta
    save_checkpoint(str(b), loaded, meta2)
    assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()
    assert (tmp_path / "a.manifest.json").read_bytes() == \
        (tmp_path / "b.manifest.json").read_bytes()
    for k in arrays:
        assert np.array_equal(loaded[k], arrays[k])
