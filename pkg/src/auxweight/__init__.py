"""Adaptive auxiliary-task weighting for GNN transfer learning.

Trains a graph neural network jointly on a target task and K
self-supervised auxiliary tasks. Per-task weights come from a small
learned weighting network driven by gradient cosine similarity and
optimized by meta-learning; rule-based baselines are included for
comparison under both the multi-task and pretrain-finetune schemes.
"""

from .graphs import (Graph, MetaPath, generate_sbm, generate_user_item,
                     load_graph, normalized_adjacency)
from .metrics import metric_auc, metric_micro_f1, metric_mrr, metric_ndcg
from .tasks import TaskSpec
from .training import (Checkpoint, TrainConfig, finetune_no_aux, pretrain,
                       run_scheme, train_joint)
from .weighting import (WeightingModel, WeightSignals, cosine_similarity,
                        joint_loss, meta_gradient, meta_step, strategy_weights,
                        weight_forward)

__version__ = "0.1.0"

__all__ = [
    "Checkpoint", "Graph", "MetaPath", "TaskSpec", "TrainConfig",
    "WeightSignals", "WeightingModel", "cosine_similarity", "finetune_no_aux",
    "generate_sbm", "generate_user_item", "joint_loss", "load_graph",
    "meta_gradient", "meta_step", "metric_auc", "metric_micro_f1",
    "metric_mrr", "metric_ndcg", "normalized_adjacency", "pretrain",
    "run_scheme", "strategy_weights", "train_joint", "weight_forward",
]
