import numpy as np
import pytest

from auxweight import tensor as T
from auxweight.errors import ConfigError, UsageError
from auxweight.graphs import generate_sbm, generate_user_item, MetaPath
from auxweight.models import (AttributeDecoderHead, EdgeScorerHead, GnnEncoder,
                              NodeClassifierHead, PairClassifierHead)
from auxweight.params import finite_diff_grad
from auxweight.tasks import (AttrGenBatcher, MetaPathBatcher, NodeBatch,
                             NodeClassBatcher, PairBatch, TaskSpec,
                             bce_with_logits_mean, base_loss,
                             cross_entropy_mean, mse_mean, task_gradient)
from auxweight.weighting import cosine_similarity


def rng_(s=0):
    return np.random.default_rng(s)


def test_cross_entropy_uniform_logits():
    logits = T.constant(np.zeros((5, 4)))
    loss = cross_entropy_mean(logits, np.array([0, 1, 2, 3, 0]))
    assert float(loss.data) == pytest.approx(np.log(4.0), abs=1e-12)


def test_cross_entropy_confident_correct():
    logits = np.full((3, 4), -10.0)
    labels = np.array([1, 2, 0])
    logits[np.arange(3), labels] = 10.0
    loss = cross_entropy_mean(T.constant(logits), labels)
    assert float(loss.data) < 1e-8


def test_cross_entropy_matches_high_precision_oracle():
    rng = rng_(1)
    logits = rng.standard_normal((8, 5)) * 3.0
    labels = rng.integers(0, 5, size=8)
    loss = float(cross_entropy_mean(T.constant(logits), labels).data)
    hp = np.asarray(logits, dtype=np.longdouble)
    logp = hp - np.log(np.exp(hp - hp.max(axis=1, keepdims=True)).sum(axis=1, keepdims=True)) - hp.max(axis=1, keepdims=True)
    expect = float(-logp[np.arange(8), labels].mean())
    assert loss == pytest.approx(expect, abs=1e-10)


def test_cross_entropy_bad_labels():
    with pytest.raises(UsageError):
        cross_entropy_mean(T.constant(np.zeros((2, 3))), np.array([0, 3]))


def test_bce_all_zero_scores_is_ln2():
    loss = bce_with_logits_mean(T.constant(np.zeros(6)), np.array([1, 0, 1, 0, 1, 0]))
    assert float(loss.data) == pytest.approx(np.log(2.0), abs=1e-12)


def test_bce_separated_margins():
    logits = np.array([20.0, 20.0, -20.0, -20.0])
    labels = np.array([1.0, 1.0, 0.0, 0.0])
    assert float(bce_with_logits_mean(T.constant(logits), labels).data) < 1e-8


def test_bce_matches_high_precision_oracle():
    rng = rng_(2)
    logits = rng.standard_normal(16) * 2.0
    labels = (rng.random(16) < 0.5).astype(float)
    loss = float(bce_with_logits_mean(T.constant(logits), labels).data)
    hp = np.asarray(logits, dtype=np.longdouble)
    p = 1.0 / (1.0 + np.exp(-hp))
    expect = float(-(labels * np.log(p) + (1 - labels) * np.log(1 - p)).mean())
    assert loss == pytest.approx(expect, abs=1e-10)


def test_mse_exact_reconstruction_is_zero():
    x = rng_(3).standard_normal((4, 6))
    assert float(mse_mean(T.constant(x), x).data) == 0.0


def test_mse_zero_prediction_unit_targets():
    assert float(mse_mean(T.constant(np.zeros((3, 7))), np.ones((3, 7))).data) == 1.0


def test_mse_matches_direct_oracle():
    rng = rng_(4)
    a, b = rng.standard_normal((5, 3)), rng.standard_normal((5, 3))
    loss = float(mse_mean(T.constant(a), b).data)
    assert loss == pytest.approx(float(((a - b) ** 2).mean()), abs=1e-12)


def build_node_setup(seed=0):
    g = generate_sbm([8, 8], 0.4, 0.1, feature_dim=4, noise=0.3, seed=seed)
    enc = GnnEncoder("gcn", 4, [6, 6], rng=rng_(seed + 1), dropout=0.0)
    head = NodeClassifierHead(6, 2, rng_(seed + 2), name="head.target")
    task = TaskSpec(task_id=0, kind="node_classification", head=head)
    batch = NodeBatch(nodes=np.arange(10), labels=g.labels[:10])
    return g, enc, task, batch


def test_edge_generation_single_edge_zero_scores_is_ln2():
    g = generate_sbm([2, 2], 0.9, 0.5, feature_dim=2, noise=0.1, seed=5)
    enc = GnnEncoder("gcn", 2, [3], rng=rng_(6), dropout=0.0)
    # zero the encoder so every score is exactly 0
    for name, _, _ in enc.registry.layout:
        enc.registry[name].data = np.zeros_like(enc.registry[name].data)
    head = EdgeScorerHead(name="head.edge")
    task = TaskSpec(task_id=1, kind="edge_generation", head=head)
    batch = PairBatch(pos_pairs=np.array([[0, 1]]), neg_pairs=np.array([[0, 2]]), k=1)
    assert float(base_loss(task, enc, g, batch).data) == pytest.approx(np.log(2.0), abs=1e-14)


def test_loss_scale_multiplies_value_exactly():
    g, enc, task, batch = build_node_setup()
    base = task_gradient(task, enc, g, batch)
    task5 = TaskSpec(task_id=0, kind=task.kind, head=task.head, loss_scale=5.0)
    scaled = task_gradient(task5, enc, g, batch)
    assert scaled.loss == 5.0 * base.loss
    assert np.array_equal(scaled.shared_grad.values, 5.0 * base.shared_grad.values)
    assert np.array_equal(scaled.head_grad.values, 5.0 * base.head_grad.values)


def test_loss_scale_must_be_positive():
    head = EdgeScorerHead()
    with pytest.raises(ConfigError):
        TaskSpec(task_id=1, kind="edge_generation", head=head, loss_scale=0.0)


def test_task_gradient_restricted_to_shared_parameters():
    g, enc, task, batch = build_node_setup(seed=7)
    ev = task_gradient(task, enc, g, batch)
    assert len(ev.shared_grad.values) == enc.registry.size
    assert len(ev.head_grad.values) == task.head.registry.size
    # encoder gradient actually moves (loss reaches shared parameters)
    assert np.linalg.norm(ev.shared_grad.values) > 0


def test_head_only_loss_has_zero_shared_gradient():
    g, enc, task, _ = build_node_setup(seed=8)
    w = task.head.registry["W"]
    loss = T.tmean(T.mul(w, w))
    shared = enc.registry.grad_vector(loss)
    assert np.array_equal(shared.values, np.zeros(enc.registry.size))


def test_task_gradient_matches_finite_differences():
    g, enc, task, batch = build_node_setup(seed=9)

    def loss_at(vec):
        enc.registry.set_vector(vec)
        return float(base_loss(task, enc, g, batch).data)

    at = enc.registry.to_vector()
    ev = task_gradient(task, enc, g, batch)
    fd = finite_diff_grad(loss_at, at, eps=1e-6)
    enc.registry.set_vector(at)
    rel = np.linalg.norm(ev.shared_grad.values - fd.values) / np.linalg.norm(fd.values)
    assert rel <= 1e-5


def test_task_gradient_is_deterministic():
    g, enc, task, batch = build_node_setup(seed=10)
    a = task_gradient(task, enc, g, batch)
    b = task_gradient(task, enc, g, batch)
    assert a.loss == b.loss
    assert np.array_equal(a.shared_grad.values, b.shared_grad.values)


def test_identical_tasks_have_cosine_exactly_one():
    g, enc, task, batch = build_node_setup(seed=11)
    twin = TaskSpec(task_id=1, kind=task.kind, head=task.head, name="twin")
    a = task_gradient(task, enc, g, batch)
    b = task_gradient(twin, enc, g, batch)
    assert cosine_similarity(a.shared_grad, b.shared_grad) == 1.0


def test_attribute_generation_loss_roundtrip():
    g = generate_sbm([6, 6], 0.4, 0.1, feature_dim=5, noise=0.2, seed=12)
    enc = GnnEncoder("gcn", 5, [6], rng=rng_(13), dropout=0.0)
    head = AttributeDecoderHead(6, 5, rng_(14), name="head.attr")
    task = TaskSpec(task_id=2, kind="attribute_generation", head=head)
    batcher = AttrGenBatcher(g, np.arange(g.num_nodes), 4, rng_(15))
    batch = batcher()
    assert batch.features[batch.nodes].sum() == 0.0
    assert np.array_equal(batch.targets, g.features[batch.nodes])
    loss = float(base_loss(task, enc, g, batch).data)
    assert np.isfinite(loss) and loss >= 0


def test_metapath_task_loss():
    g = generate_user_item(15, 15, 3, seed=16)
    enc = GnnEncoder("gcn", g.feature_dim, [6], rng=rng_(17), dropout=0.0)
    head = PairClassifierHead(6, 8, rng_(18), name="head.mp")
    task = TaskSpec(task_id=3, kind="metapath_prediction", head=head)
    mp = MetaPath.from_names(g, ["user", "item", "user"])
    batch = MetaPathBatcher(g, mp, 10, 10, rng_(19))()
    loss = float(base_loss(task, enc, g, batch).data)
    assert np.isfinite(loss)
    # all-zero pair-classifier output gives exactly ln 2
    for name, _, _ in head.registry.layout:
        head.registry[name].data = np.zeros_like(head.registry[name].data)
    assert float(base_loss(task, enc, g, batch).data) == pytest.approx(np.log(2.0), abs=1e-14)


def test_pair_batch_split_keeps_negative_blocks():
    pos = np.arange(12).reshape(6, 2)
    neg = np.arange(24).reshape(12, 2)
    batch = PairBatch(pos_pairs=pos, neg_pairs=neg, k=2)
    tr, mt = batch.split(0.5, rng_(20))
    assert tr.n_units == 3 and mt.n_units == 3
    for part in (tr, mt):
        for i, (u, v) in enumerate(part.pos_pairs):
            block = part.neg_pairs[2 * i:2 * i + 2]
            expect = neg[u // 2 * 2: u // 2 * 2 + 2]
            assert np.array_equal(block, expect)


def test_node_batcher_requires_labels():
    g = generate_sbm([4, 4], 0.5, 0.2, feature_dim=2, noise=0.1, seed=21)
    g.labels[2] = -1
    with pytest.raises(ConfigError):
        NodeClassBatcher(g, np.array([0, 2]), 4, rng_(22))
