"""Seeded samplers feeding the target and auxiliary tasks.

Every sampler is a pure function of its inputs and the seed (or an
explicitly passed Generator), so runs replay exactly.
"""

import numpy as np

from .errors import ConfigError, SamplingError, UsageError


def _rng(seed_or_rng):
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


def sample_negative_edges(g, positives, k, seed):
    """k uniform non-edges per positive pair, rejection-sampled.

    Excludes self-loops and existing edges. Raises after 100*k failed
    attempts per positive (graph too dense).
    """
    if k < 1:
        raise ConfigError(f"negative ratio k must be >= 1, got {k}")
    rng = _rng(seed)
    edge_set = g.edge_key_set()
    n = g.num_nodes
    out = np.empty((len(positives) * k, 2), dtype=np.int64)
    row = 0
    for _ in range(len(positives)):
        taken = 0
        attempts = 0
        while taken < k:
            if attempts >= 100 * k:
                raise SamplingError(
                    f"could not find {k} non-edges after {attempts} attempts")
            u = int(rng.integers(0, n))
            v = int(rng.integers(0, n))
            attempts += 1
            if u == v or u * n + v in edge_set:
                continue
            out[row] = (u, v)
            row += 1
            taken += 1
    return out


def mask_attributes(g, fraction, seed):
    """Replace a seeded fraction of feature rows with the zero mask token.

    Returns (masked feature matrix, masked row ids, original rows).
    """
    if not 0.0 < fraction <= 1.0:
        raise ConfigError(f"mask fraction must be in (0, 1], got {fraction}")
    count = int(round(fraction * g.num_nodes))
    if count == 0:
        raise ConfigError(f"mask fraction {fraction} selects zero of "
                          f"{g.num_nodes} nodes")
    rng = _rng(seed)
    idx = np.sort(rng.choice(g.num_nodes, size=count, replace=False))
    masked = g.features.copy()
    targets = g.features[idx].copy()
    masked[idx] = 0.0
    return masked, idx, targets


def mask_rows(features, idx):
    """Zero out the given rows; returns (masked copy, original rows)."""
    masked = features.copy()
    targets = features[idx].copy()
    masked[idx] = 0.0
    return masked, targets


def _walk_once(g, mp, start, rng):
    """One random walk conforming to the meta-path; returns end node or
    the step index where it died."""
    node = start
    for step in range(1, len(mp.node_types)):
        want_type = mp.node_types[step]
        nbrs = g.neighbors(node)
        ok = g.node_type[nbrs] == want_type
        if mp.edge_types is not None:
            ok &= g.neighbor_edge_types(node) == mp.edge_types[step - 1]
        cand = nbrs[ok]
        if len(cand) == 0:
            return None, step
        node = int(cand[rng.integers(0, len(cand))])
    return node, None


def sample_metapath_pairs(g, mp, n_pos, n_neg, seed):
    """Labeled node pairs for meta-path prediction.

    Positives are endpoints of seeded random walks realizing the pattern;
    negatives are type-matched random pairs not seen among the positives.
    Returns (pairs array (n,2), labels array).
    """
    if g.node_type is None:
        raise ConfigError("meta-path sampling requires node types")
    rng = _rng(seed)
    starts = g.nodes_of_type(mp.node_types[0])
    ends = g.nodes_of_type(mp.node_types[-1])
    if len(starts) == 0 or len(ends) == 0:
        raise SamplingError(f"no nodes of the meta-path endpoint types "
                            f"({mp.node_types[0]}, {mp.node_types[-1]})")
    positives = []
    attempts = 0
    max_attempts = max(100 * n_pos, 100)
    deepest_failure = 0
    while len(positives) < n_pos:
        if attempts >= max_attempts:
            raise SamplingError(
                f"meta-path walk failed at step {deepest_failure} "
                f"after {attempts} attempts")
        start = int(starts[rng.integers(0, len(starts))])
        end, failed_at = _walk_once(g, mp, start, rng)
        attempts += 1
        if end is None:
            deepest_failure = max(deepest_failure, failed_at)
            continue
        positives.append((start, end))
    pos_set = set(positives)
    negatives = []
    attempts = 0
    max_attempts = max(100 * n_neg, 100)
    while len(negatives) < n_neg:
        if attempts >= max_attempts:
            raise SamplingError(
                f"could not sample {n_neg} negative pairs after {attempts} attempts")
        u = int(starts[rng.integers(0, len(starts))])
        v = int(ends[rng.integers(0, len(ends))])
        attempts += 1
        if (u, v) in pos_set:
            continue
        negatives.append((u, v))
    pairs = np.asarray(positives + negatives, dtype=np.int64)
    labels = np.concatenate([np.ones(n_pos), np.zeros(n_neg)])
    return pairs, labels


def split_batch(batch, ratio, seed):
    """Disjoint (train, meta) partition of a batch.

    The train part gets round-half-up(ratio * len(batch)) items; the rest
    go to the meta part. Deterministic per seed.
    """
    batch = np.asarray(batch)
    if len(batch) < 2:
        raise UsageError(f"split_batch needs at least 2 items, got {len(batch)}")
    if not 0.0 < ratio < 1.0:
        raise ConfigError(f"split ratio must be in (0, 1), got {ratio}")
    rng = _rng(seed)
    perm = rng.permutation(len(batch))
    n_train = int(np.floor(ratio * len(batch) + 0.5))
    return batch[perm[:n_train]], batch[perm[n_train:]]
