"""Training loops: pre-training on auxiliary tasks, plain fine-tuning, and
the two-stage adaptive-weighting loop, under both transfer schemes.

Each step of the joint loop: draw target and auxiliary batches; split the
target batch into a train part and a meta part; compute per-task shared
gradients and similarities on the train part (stage 1); update the
weighting model from the closed-form meta-gradient evaluated on the meta
part; recompute target-side signals on the full batch (stage 2); weight
the per-task losses with the updated model and take one optimizer step on
the encoder and all active heads. Every stage is logged.

Determinism: every random draw comes from a named, seed-derived stream
(per task, per purpose, per phase), so a task's stream does not move when
other tasks are added, removed, or zero-weighted.
"""

import hashlib
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import AuxweightError, ConfigError, NumericError
from .graphs import DataSplit, MetaPath, split_indices
from .metrics import metric_auc, metric_micro_f1, metric_mrr, metric_ndcg
from .models import (AttributeDecoderHead, EdgeScorerHead, GnnEncoder,
                     NodeClassifierHead, PairClassifierHead,
                     load_checkpoint, save_checkpoint)
from .params import Optimizer, grad_vectors
from .records import RunRecord
from .tasks import (AttrGenBatcher, EdgeGenBatcher, LinkPredBatcher,
                    MetaPathBatcher, NodeClassBatcher, TaskSpec,
                    task_gradient, task_loss)
from .weighting import (LEARNED_STRATEGIES, STRATEGIES, WeightingModel,
                        WeightSignals, cosine_similarity, joint_loss,
                        meta_gradient, meta_step, strategy_variant,
                        strategy_weights)

# stream domain codes: a draw's source is (seed, phase, domain[, task_id])
_ENC_INIT, _HEAD_INIT, _SAMPLER, _DROPOUT, _SPLIT, _WEIGHT_INIT, _EVAL, _DATA = \
    1, 2, 3, 4, 5, 6, 7, 8
PHASE_PRETRAIN, PHASE_JOINT = 100, 200

NODE_METRICS = ("micro_f1",)
LINK_METRICS = ("auc", "mrr", "ndcg")


def stream(seed, *key):
    return np.random.default_rng(np.random.SeedSequence([int(seed)] + [int(k) for k in key]))


@dataclass
class TrainConfig:
    """Everything one seeded run needs besides the graph itself."""

    scheme: str = "mtl"                     # "mtl" | "pf"
    strategy: str = "aux-ts-all-sims"
    target: str = "node_classification"     # or "link_prediction"
    aux_tasks: tuple = ("edge_generation", "attribute_generation")
    seed: int = 0
    # learning rates (defaults follow the joint/pretrain convention 5e-4/1e-3
    # for the GNN and 1e-5 for the weighting model)
    alpha: float = 5e-4
    alpha_pretrain: float = 1e-3
    beta: float = 1e-5
    optimizer: str = "adam"
    epochs: int = 100
    pretrain_epochs: int = 50
    batch_size: int = 256
    split_ratio: float = 0.5
    resample_split: bool = True             # fresh Split(D^sup) each step
    stage2_full_batch: bool = True          # stage 2 on full D^sup (vs train part)
    # model
    encoder: str = "gcn"
    num_layers: int = 2
    hidden_dim: int = 64
    dropout: float = 0.2
    activation: str = "relu"
    weighting_hidden: int = 32
    type_dim: int = 4
    # task plumbing
    k_negative: int = 5
    metapath_pos: int = 64
    metapath_neg: int = 64
    loss_scales: dict = field(default_factory=dict)   # task name -> scale
    aux_partition: str = "finetune"         # P&F: aux data from this partition
    reuse_pretrain_heads: bool = False
    # data protocol
    pretrain_fraction: float = 0.7
    same_graph_pretrain: bool = False
    ranking_candidates: int = 20
    # control
    patience: int = 20
    metrics: tuple = ("micro_f1",)
    sparse_threshold: int = 5000
    divergence_limit: float = 1e6

    def validate(self):
        if self.scheme not in ("mtl", "pf"):
            raise ConfigError(f"unknown scheme '{self.scheme}'")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy '{self.strategy}'")
        if self.alpha <= 0 or self.alpha_pretrain <= 0 or self.beta <= 0:
            raise ConfigError("learning rates must be positive")
        if self.epochs < 1 or self.pretrain_epochs < 0:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2 (the meta split needs both parts)")
        if not 0.0 < self.split_ratio < 1.0:
            raise ConfigError(f"split_ratio must be in (0, 1), got {self.split_ratio}")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        if self.target == "node_classification":
            bad = [m for m in self.metrics if m not in NODE_METRICS]
        elif self.target == "link_prediction":
            bad = [m for m in self.metrics if m not in LINK_METRICS]
        else:
            raise ConfigError(f"unknown target task '{self.target}'")
        if bad:
            raise ConfigError(f"metrics {bad} incompatible with target '{self.target}'")
        if self.aux_partition not in ("finetune", "pretrain", "all"):
            raise ConfigError(f"unknown aux_partition '{self.aux_partition}'")
        return self


@dataclass
class Checkpoint:
    """Named parameter arrays plus metadata; round-trips bit-exactly."""

    arrays: dict
    meta: dict

    def save(self, stem):
        save_checkpoint(stem, self.arrays, self.meta)

    @classmethod
    def load(cls, stem):
        arrays, meta = load_checkpoint(stem)
        return cls(arrays=arrays, meta=meta)


# ---------------------------------------------------------------------------
# data protocol


@dataclass
class TargetData:
    """Target-task supervision units plus the scheme's partitions."""

    kind: str
    split: DataSplit
    pairs: np.ndarray = None     # link target: unit i is pairs[i]

    def units(self, which):
        return getattr(self.split, which)


def make_target_data(config, g):
    """Seeded split of the target task's supervision units.

    Node classification splits labeled nodes; link prediction splits the
    target-type edge pairs. P&F holds out ``pretrain_fraction`` first
    (unless the same-graph protocol is on).
    """
    same_graph = config.same_graph_pretrain or config.target == "link_prediction"
    seed_entropy = stream(config.seed, _DATA).integers(0, 2 ** 63 - 1)
    if config.target == "node_classification":
        if g.labels is None:
            raise ConfigError("node classification target requires labels")
        universe = np.flatnonzero(g.labels >= 0)
        split = split_indices(universe, seed_entropy, scheme=config.scheme,
                              pretrain_fraction=config.pretrain_fraction,
                              same_graph_pretrain=same_graph)
        return TargetData(kind=config.target, split=split)
    pairs = g.edge_pairs()
    if g.edge_type is not None:
        # target pairs are the user-item relation (edge type 0)
        keep = []
        for u, v in pairs:
            jj = g.offsets[u] + np.searchsorted(g.neighbors(u), v)
            keep.append(g.edge_type[jj] == 0)
        pairs = pairs[np.asarray(keep, dtype=bool)]
    idx = split_indices(np.arange(len(pairs)), seed_entropy, scheme=config.scheme,
                        pretrain_fraction=config.pretrain_fraction,
                        same_graph_pretrain=same_graph)
    return TargetData(kind=config.target, split=idx, pairs=pairs)


def _aux_node_pool(config, g, data, phase):
    if data.kind == "link_prediction":
        # split units are pair indices; the same-graph protocol gives the
        # self-supervised tasks the whole node set
        return np.arange(g.num_nodes)
    if phase == PHASE_PRETRAIN:
        pool = data.split.pretrain
        return np.arange(g.num_nodes) if pool is None else pool
    if config.scheme == "mtl" or config.aux_partition == "all":
        return np.arange(g.num_nodes)
    if config.aux_partition == "pretrain" and data.split.pretrain is not None:
        return data.split.pretrain
    if data.split.finetune is not None:
        return data.split.finetune
    return np.arange(g.num_nodes)


def _edges_within(g, nodes):
    mask = np.zeros(g.num_nodes, dtype=bool)
    mask[nodes] = True
    pairs = g.edge_pairs()
    return pairs[mask[pairs[:, 0]] & mask[pairs[:, 1]]]


def _parse_aux_entries(config):
    out = []
    for entry in config.aux_tasks:
        if isinstance(entry, str):
            entry = {"kind": entry}
        out.append(dict(entry))
    return out


def _make_aux_tasks(config, g, data, phase):
    """Auxiliary TaskSpecs with their own seeded samplers and fresh heads."""
    tasks = []
    for i, entry in enumerate(_parse_aux_entries(config), start=1):
        kind = entry["kind"]
        name = entry.get("name") or (f"{kind}:{'-'.join(entry['path'])}"
                                     if kind == "metapath_prediction" and "path" in entry
                                     else kind)
        scale = float(config.loss_scales.get(name, entry.get("loss_scale", 1.0)))
        head_rng = stream(config.seed, phase, _HEAD_INIT, i)
        samp_rng = stream(config.seed, phase, _SAMPLER, i)
        pool = _aux_node_pool(config, g, data, phase)
        if kind == "edge_generation":
            head = EdgeScorerHead(name=f"head.{name}")
            pairs = _edges_within(g, pool)
            sampler = EdgeGenBatcher(g, pairs, config.batch_size,
                                     config.k_negative, samp_rng)
        elif kind == "attribute_generation":
            head = AttributeDecoderHead(config.hidden_dim, g.feature_dim,
                                        head_rng, name=f"head.{name}")
            sampler = AttrGenBatcher(g, pool, config.batch_size, samp_rng)
        elif kind == "metapath_prediction":
            path = entry.get("path")
            if path is None:
                raise ConfigError("metapath_prediction entries need a 'path'")
            mp = MetaPath.from_names(g, path)
            head = PairClassifierHead(config.hidden_dim, config.hidden_dim,
                                      head_rng, name=f"head.{name}")
            sampler = MetaPathBatcher(g, mp, entry.get("n_pos", config.metapath_pos),
                                      entry.get("n_neg", config.metapath_neg), samp_rng)
        else:
            raise ConfigError(f"unknown auxiliary task kind '{kind}'")
        tasks.append(TaskSpec(task_id=i, kind=kind, head=head, sampler=sampler,
                              loss_scale=scale, name=name))
    return tasks


def _make_target_task(config, g, data):
    head_rng = stream(config.seed, PHASE_JOINT, _HEAD_INIT, 0)
    samp_rng = stream(config.seed, PHASE_JOINT, _SAMPLER, 0)
    train_units = data.units("train")
    if data.kind == "node_classification":
        num_classes = int(g.labels.max()) + 1
        head = NodeClassifierHead(config.hidden_dim, num_classes, head_rng,
                                  name="head.target")
        sampler = NodeClassBatcher(g, train_units, config.batch_size, samp_rng)
    else:
        head = EdgeScorerHead(name="head.target")
        sampler = LinkPredBatcher(g, data.pairs[train_units], config.batch_size,
                                  config.k_negative, samp_rng)
    scale = float(config.loss_scales.get("target", 1.0))
    return TaskSpec(task_id=0, kind=data.kind, head=head, sampler=sampler,
                    loss_scale=scale, name="target")


def _make_encoder(config, g):
    return GnnEncoder(config.encoder, g.feature_dim,
                      [config.hidden_dim] * config.num_layers,
                      rng=stream(config.seed, _ENC_INIT),
                      activation=config.activation, dropout=config.dropout,
                      sparse_threshold=config.sparse_threshold)


# ---------------------------------------------------------------------------
# evaluation


class TargetEvaluator:
    """Fixed evaluation sets built once per run (full-split evaluation)."""

    def __init__(self, config, g, data, target_task):
        self.config = config
        self.g = g
        self.data = data
        self.task = target_task
        self.sets = {}
        rng = stream(config.seed, _EVAL)
        for which in ("valid", "test"):
            units = data.units(which)
            if data.kind == "node_classification":
                self.sets[which] = {"nodes": units, "labels": g.labels[units]}
            else:
                pos = data.pairs[units]
                from .sampling import sample_negative_edges
                neg = sample_negative_edges(g, pos, 1, rng)
                entry = {"pos": pos, "neg": neg}
                if any(m in self.config.metrics for m in ("mrr", "ndcg")):
                    entry["candidates"] = self._candidates(pos, rng)
                self.sets[which] = entry

    def _candidates(self, pos, rng):
        """Per query: the true endpoint plus sampled same-type distractors."""
        true_items = pos[:, 1]
        if self.g.node_type is not None:
            pool = self.g.nodes_of_type(int(self.g.node_type[true_items[0]]))
        else:
            pool = np.arange(self.g.num_nodes)
        n_cand = min(self.config.ranking_candidates, len(pool))
        cands = np.empty((len(pos), n_cand), dtype=np.int64)
        for i, v in enumerate(true_items):
            others = pool[pool != v]
            distract = rng.choice(others, size=n_cand - 1, replace=False)
            cands[i] = np.concatenate([[v], distract])
        return cands

    def evaluate(self, encoder, which):
        z = encoder.encode(self.g)
        entry = self.sets[which]
        out = {}
        if self.data.kind == "node_classification":
            logits = self.task.head.forward(z, entry["nodes"]).data
            pred = logits.argmax(axis=1)
            out["micro_f1"] = metric_micro_f1(pred, entry["labels"])
            return out
        pos_scores = self.task.head.forward(z, entry["pos"]).data
        neg_scores = self.task.head.forward(z, entry["neg"]).data
        if "auc" in self.config.metrics:
            out["auc"] = metric_auc(np.concatenate([pos_scores, neg_scores]),
                                    np.concatenate([np.ones(len(pos_scores)),
                                                    np.zeros(len(neg_scores))]))
        if "candidates" in entry:
            ranks, rel_lists = [], []
            emb = z.data
            for i, cand in enumerate(entry["candidates"]):
                u = entry["pos"][i, 0]
                scores = emb[cand] @ emb[u]
                order = np.argsort(-scores, kind="stable")
                rank = int(np.flatnonzero(order == 0)[0]) + 1
                ranks.append(rank)
                rel = np.zeros(len(cand))
                rel[rank - 1] = 1.0
                rel_lists.append(rel)
            if "mrr" in self.config.metrics:
                out["mrr"] = metric_mrr(ranks)
            if "ndcg" in self.config.metrics:
                out["ndcg"] = metric_ndcg(rel_lists)
        return out


# ---------------------------------------------------------------------------
# the joint loop


class JointRun:
    """State of one joint-training phase (MTL training or P&F fine-tuning)."""

    def __init__(self, config, g, data, record, step0=0, init=None):
        config.validate()
        self.config = config
        self.g = g
        self.record = record
        self.step = step0
        self.phase_name = "train" if config.scheme == "mtl" else "finetune"

        self.meta_batcher = None
        if not config.resample_split:
            # fixed-holdout mode: carve a meta pool out of the train units
            # once; regular batches never see it
            from .sampling import split_batch
            units = data.units("train")
            tr_units, meta_units = split_batch(
                units, config.split_ratio, stream(config.seed, PHASE_JOINT, _SPLIT, 1))
            split = DataSplit(train=tr_units, valid=data.split.valid,
                              test=data.split.test, pretrain=data.split.pretrain,
                              finetune=data.split.finetune)
            data = TargetData(kind=data.kind, split=split, pairs=data.pairs)
            meta_size = max(2, config.batch_size - int(np.floor(
                config.split_ratio * config.batch_size + 0.5)))
            meta_rng = stream(config.seed, PHASE_JOINT, _SAMPLER, 0, 1)
            if data.kind == "node_classification":
                self.meta_batcher = NodeClassBatcher(g, meta_units, meta_size, meta_rng)
            else:
                self.meta_batcher = LinkPredBatcher(g, data.pairs[meta_units],
                                                    meta_size, config.k_negative,
                                                    meta_rng)
        self.data = data

        self.encoder = _make_encoder(config, g)
        self.target = _make_target_task(config, g, data)
        self.auxes = _make_aux_tasks(config, g, data, PHASE_JOINT)
        self.tasks = [self.target] + self.auxes
        if init is not None:
            self._load_init(init)

        self.weighting = None
        if config.strategy in LEARNED_STRATEGIES:
            self.weighting = WeightingModel(
                num_aux=len(self.auxes), variant=strategy_variant(config.strategy),
                hidden_dim=config.weighting_hidden, type_dim=config.type_dim,
                rng=stream(config.seed, _WEIGHT_INIT))
        self.zero_sims = config.strategy == "selar-like"

        self.opt_encoder = Optimizer(config.optimizer, config.alpha,
                                     self.encoder.registry.size)
        self.opt_heads = {t.task_id: Optimizer(config.optimizer, config.alpha,
                                               t.head.registry.size)
                          for t in self.tasks}
        self.rng_split = stream(config.seed, PHASE_JOINT, _SPLIT)
        self.rng_drop = {t.task_id: stream(config.seed, PHASE_JOINT, _DROPOUT, t.task_id)
                         for t in self.tasks}
        self.evaluator = TargetEvaluator(config, g, data, self.target)

    def _load_init(self, checkpoint):
        for name, offset, shape in self.encoder.registry.layout:
            key = f"encoder.{name}"
            if key not in checkpoint.arrays:
                raise ConfigError(f"checkpoint missing parameter '{key}'")
            if tuple(checkpoint.arrays[key].shape) != tuple(shape):
                raise ConfigError(f"checkpoint shape mismatch for '{key}'")
            self.encoder.registry[name].data = checkpoint.arrays[key].copy()
        if self.config.reuse_pretrain_heads:
            for t in self.auxes:
                for name, _, _ in t.head.registry.layout:
                    key = f"head.{t.name}.{name}"
                    if key in checkpoint.arrays:
                        t.head.registry[name].data = checkpoint.arrays[key].copy()

    # -- one Algorithm-style step ------------------------------------------

    def _signals(self, evals):
        sims = np.empty(len(evals))
        sims[0] = 1.0
        for i, ev in enumerate(evals[1:], start=1):
            sims[i] = cosine_similarity(evals[0].shared_grad, ev.shared_grad)
        return WeightSignals(sims, np.array([ev.loss for ev in evals]))

    def _theta_digest(self):
        return hashlib.sha1(self.encoder.registry.to_vector().values.tobytes()).digest()

    def _meta_update(self, signals, evals, meta_batch):
        theta = self.encoder.registry.to_vector()
        digest_before = self._theta_digest()

        def sup_grad_at(theta_hat):
            enc_snap = self.encoder.registry.snapshot()
            head_snap = self.target.head.registry.snapshot()
            self.encoder.registry.set_vector(theta_hat)
            if self.target.head.registry.size:
                head_vec = self.target.head.registry.to_vector()
                virtual = head_vec.values - self.config.alpha * evals[0].head_grad.values
                from .params import ParamVector
                self.target.head.registry.set_vector(
                    ParamVector(virtual, head_vec.layout))
            u = task_gradient(self.target, self.encoder, self.g, meta_batch).shared_grad
            self.encoder.registry.restore(enc_snap)
            self.target.head.registry.restore(head_snap)
            return u

        grad_w = meta_gradient(self.weighting, signals,
                               [ev.shared_grad for ev in evals], theta,
                               self.config.alpha, sup_grad_at,
                               zero_sims=self.zero_sims)
        meta_step(self.weighting, grad_w, self.config.beta)
        if self._theta_digest() != digest_before:
            raise AuxweightError("meta step mutated the shared parameters")

    def one_step(self):
        """Returns None, or the joint loss value that tripped the guard."""
        cfg = self.config
        target_batch = self.target.draw()
        aux_batches = [t.draw() for t in self.auxes]

        if self.meta_batcher is None:
            train_b, meta_b = target_batch.split(cfg.split_ratio, self.rng_split)
        else:
            train_b, meta_b = target_batch, self.meta_batcher()
            target_batch = train_b

        # stage 1: per-task gradients and similarities on the train part
        evals1 = [task_gradient(self.target, self.encoder, self.g, train_b)]
        for t, b in zip(self.auxes, aux_batches):
            evals1.append(task_gradient(t, self.encoder, self.g, b))
        signals1 = self._signals(evals1)
        weights1 = strategy_weights(cfg.strategy, signals1, self.weighting)
        for t, w, ev, s in zip(self.tasks, weights1, evals1, signals1.sims):
            self.record.log(self.step, "meta", t.task_id, ev.loss, w, s)

        # meta update of the weighting model on the meta part
        if self.weighting is not None:
            self._meta_update(signals1, evals1, meta_b)

        # stage 2: recompute target-side signals on the full batch; the
        # auxiliary batches and parameters are unchanged, so those
        # gradients are bit-identical and are reused
        batch2 = target_batch if cfg.stage2_full_batch else train_b
        evals2 = [task_gradient(self.target, self.encoder, self.g, batch2)] + evals1[1:]
        signals2 = self._signals(evals2)
        weights2 = strategy_weights(cfg.strategy, signals2, self.weighting)

        # real update: joint loss with dropout on; zero-weight tasks are
        # skipped entirely so they cannot perturb the trajectory
        batches = [batch2] + aux_batches
        active = [(t, w, b) for t, w, b in zip(self.tasks, weights2, batches)
                  if w != 0.0]
        loss_nodes = [task_loss(t, self.encoder, self.g, b,
                                dropout_rng=self.rng_drop[t.task_id])
                      for t, _, b in active]
        total = joint_loss([w for _, w, _ in active], loss_nodes)
        value = float(total.data)
        if not np.isfinite(value) or abs(value) > cfg.divergence_limit:
            return value
        regs = [self.encoder.registry] + [t.head.registry for t, _, _ in active]
        gvecs = grad_vectors(total, regs)
        self.encoder.registry.set_vector(
            self.opt_encoder.step(self.encoder.registry.to_vector(), gvecs[0]))
        for (t, _, _), gv in zip(active, gvecs[1:]):
            if t.head.registry.size:
                t.head.registry.set_vector(
                    self.opt_heads[t.task_id].step(t.head.registry.to_vector(), gv))

        for t, w, ev, s in zip(self.tasks, weights2, evals2, signals2.sims):
            self.record.log(self.step, self.phase_name, t.task_id, ev.loss, w, s)
        self.step += 1
        return None

    def attach_valid(self, value):
        """Stamp the epoch's validation metric on the step's target row."""
        row = self.record.rows[-len(self.tasks)]
        if row.task_id != 0:
            raise AuxweightError("target row not where expected")
        row.valid_metric = float(value)

    def snapshot_best(self):
        return ([a.copy() for a in self.encoder.registry.snapshot()],
                [a.copy() for a in self.target.head.registry.snapshot()])

    def restore_best(self, snap):
        self.encoder.registry.restore(snap[0])
        self.target.head.registry.restore(snap[1])


def _steps_per_epoch(pool_size, batch_size):
    return max(1, int(np.ceil(pool_size / batch_size)))


def train_joint(config, g, data=None, init=None, record=None, step0=0):
    """The adaptive joint training loop; returns (record, checkpoint).

    Evaluates the first configured metric on the validation split each
    epoch, keeps the best parameters (patience-limited early stopping),
    and reports test metrics at the best point.
    """
    config.validate()
    if data is None:
        data = make_target_data(config, g)
    if record is None:
        record = RunRecord()
    run = JointRun(config, g, data, record, step0=step0, init=init)
    primary = config.metrics[0]
    steps = _steps_per_epoch(len(run.data.units("train")), config.batch_size)
    best_value = -np.inf
    best_snap = None
    best_epoch = -1
    start = time.time()
    for epoch in range(config.epochs):
        for _ in range(steps):
            try:
                tripped = run.one_step()
            except NumericError as exc:
                record.aborted = True
                record.abort_reason = f"numeric error at step {run.step}: {exc}"
                break
            if tripped is not None:
                record.aborted = True
                record.abort_reason = (f"joint loss {tripped!r} tripped the "
                                       f"divergence guard at step {run.step}")
                break
        if record.aborted:
            break
        value = run.evaluator.evaluate(run.encoder, "valid")[primary]
        run.attach_valid(value)
        # keep the latest checkpoint among validation ties (most converged);
        # patience only resets on strict improvement
        if value >= best_value:
            if value > best_value:
                best_epoch = epoch
            best_value = value
            best_snap = run.snapshot_best()
        if epoch - best_epoch >= config.patience:
            break
    if best_snap is not None:
        run.restore_best(best_snap)
        record.final_metrics = dict(run.evaluator.evaluate(run.encoder, "test"))
        record.final_metrics[f"valid_{primary}"] = best_value
    record.wall_clock += time.time() - start
    return record, _checkpoint_from_run(run)


def _checkpoint_from_run(run):
    arrays = {}
    for name, _, _ in run.encoder.registry.layout:
        arrays[f"encoder.{name}"] = run.encoder.registry[name].data.copy()
    for t in run.tasks:
        for name, _, _ in t.head.registry.layout:
            arrays[f"head.{t.name}.{name}"] = t.head.registry[name].data.copy()
    if run.weighting is not None:
        for name, _, _ in run.weighting.registry.layout:
            arrays[f"weighting.{name}"] = run.weighting.registry[name].data.copy()
    meta = {"encoder_kind": run.config.encoder, "step": run.step,
            "strategy": run.config.strategy}
    return Checkpoint(arrays=arrays, meta=meta)


def finetune_no_aux(config, g, data=None, init=None, record=None, step0=0):
    """Plain fine-tuning: minimize the target loss only.

    Runs the joint loop with the no-aux strategy, whose weights are
    [1, 0, ..., 0], so the trajectory is the bare target-task descent.
    """
    return train_joint(replace(config, strategy="no-aux"), g, data=data,
                       init=init, record=record, step0=step0)


# ---------------------------------------------------------------------------
# pre-training


def pretrain(config, g, data=None, record=None):
    """Minimize the unweighted sum of auxiliary losses on the pretrain
    partition; returns (record, checkpoint with encoder + pretrain heads)."""
    config.validate()
    if not config.aux_tasks:
        raise ConfigError("pretrain requires at least one auxiliary task")
    if data is None:
        data = make_target_data(config, g)
    if record is None:
        record = RunRecord()
    encoder = _make_encoder(config, g)
    auxes = _make_aux_tasks(config, g, data, PHASE_PRETRAIN)
    opt_encoder = Optimizer(config.optimizer, config.alpha_pretrain,
                            encoder.registry.size)
    opt_heads = {t.task_id: Optimizer(config.optimizer, config.alpha_pretrain,
                                      t.head.registry.size) for t in auxes}
    rng_drop = {t.task_id: stream(config.seed, PHASE_PRETRAIN, _DROPOUT, t.task_id)
                for t in auxes}
    pool = _aux_node_pool(config, g, data, PHASE_PRETRAIN)
    steps = _steps_per_epoch(len(pool), config.batch_size)
    start = time.time()
    step = 0
    for _ in range(config.pretrain_epochs):
        for _ in range(steps):
            batches = [t.draw() for t in auxes]
            try:
                loss_nodes = [task_loss(t, encoder, g, b, dropout_rng=rng_drop[t.task_id])
                              for t, b in zip(auxes, batches)]
                total = joint_loss(np.ones(len(auxes)), loss_nodes)
            except NumericError as exc:
                record.aborted = True
                record.abort_reason = f"numeric error in pretraining: {exc}"
                break
            value = float(total.data)
            if not np.isfinite(value) or abs(value) > config.divergence_limit:
                record.aborted = True
                record.abort_reason = (f"pretraining loss {value!r} tripped the "
                                       f"divergence guard at step {step}")
                break
            regs = [encoder.registry] + [t.head.registry for t in auxes]
            gvecs = grad_vectors(total, regs)
            encoder.registry.set_vector(
                opt_encoder.step(encoder.registry.to_vector(), gvecs[0]))
            for t, gv in zip(auxes, gvecs[1:]):
                if t.head.registry.size:
                    t.head.registry.set_vector(
                        opt_heads[t.task_id].step(t.head.registry.to_vector(), gv))
            for t, node in zip(auxes, loss_nodes):
                record.log(step, "pretrain", t.task_id, float(node.data), 1.0, None)
            step += 1
        if record.aborted:
            break
    record.wall_clock += time.time() - start
    arrays = {}
    for name, _, _ in encoder.registry.layout:
        arrays[f"encoder.{name}"] = encoder.registry[name].data.copy()
    for t in auxes:
        for name, _, _ in t.head.registry.layout:
            arrays[f"head.{t.name}.{name}"] = t.head.registry[name].data.copy()
    meta = {"encoder_kind": config.encoder, "step": step, "phase": "pretrain"}
    return record, Checkpoint(arrays=arrays, meta=meta)


# ---------------------------------------------------------------------------
# schemes


def run_scheme(config, g):
    """One full experiment arm: MTL trains jointly from scratch; P&F
    pre-trains on auxiliary tasks first and fine-tunes from the checkpoint."""
    config.validate()
    data = make_target_data(config, g)
    record = RunRecord()
    if config.scheme == "mtl":
        record, _ = train_joint(config, g, data=data, record=record)
        return record
    record, ckpt = pretrain(config, g, data=data, record=record)
    if record.aborted:
        return record
    step0 = max((r.step for r in record.rows), default=-1) + 1
    record, _ = train_joint(config, g, data=data, init=ckpt, record=record,
                            step0=step0)
    return record
