"""Experiment harness: JSON configs, multi-seed execution, aggregation,
and the loss-rescale protocol."""

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .errors import AuxweightError, ConfigError
from .graphs import generate_sbm, generate_user_item, load_graph
from .records import RunRecord, aggregate, write_csv, write_summary
from .training import TrainConfig, pretrain, run_scheme

DEFAULT_RESCALE_GRID = ((1, 1), (1, 5), (5, 1), (5, 5))
RANKING_NOTE = ("ranking metrics (mrr/ndcg) are computed on a synthetic "
                "multi-candidate ranking task: each test pair scores its true "
                "endpoint against sampled same-type distractors")


@dataclass
class ExperimentConfig:
    """One experiment: dataset, training setup, seeds, output location."""

    dataset: dict
    train: TrainConfig
    seeds: list = field(default_factory=lambda: [0])
    output_dir: str = "runs/experiment"
    name: str = "experiment"

    def validate(self):
        if not self.seeds:
            raise ConfigError("need at least one seed")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        self.train.validate()
        if "kind" not in self.dataset:
            raise ConfigError("dataset spec needs a 'kind'")
        return self

    def to_dict(self):
        d = {"dataset": self.dataset, "train": asdict(self.train),
             "seeds": list(self.seeds), "output_dir": self.output_dir,
             "name": self.name}
        d["train"]["aux_tasks"] = list(d["train"]["aux_tasks"])
        d["train"]["metrics"] = list(d["train"]["metrics"])
        return d

    def fingerprint(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def config_from_dict(raw):
    train_raw = dict(raw.get("train", {}))
    if "aux_tasks" in train_raw:
        train_raw["aux_tasks"] = tuple(
            t if isinstance(t, str) else dict(t) for t in train_raw["aux_tasks"])
    if "metrics" in train_raw:
        train_raw["metrics"] = tuple(train_raw["metrics"])
    unknown = set(train_raw) - {f.name for f in TrainConfig.__dataclass_fields__.values()}
    if unknown:
        raise ConfigError(f"unknown train config fields: {sorted(unknown)}")
    cfg = ExperimentConfig(
        dataset=dict(raw.get("dataset", {})),
        train=TrainConfig(**train_raw),
        seeds=list(raw.get("seeds", [0])),
        output_dir=raw.get("output_dir", "runs/experiment"),
        name=raw.get("name", "experiment"))
    return cfg.validate()


def load_config(path):
    with open(path) as fh:
        return config_from_dict(json.load(fh))


def build_graph(dataset):
    """Materialize the dataset spec: synthetic generators or edge-list files."""
    kind = dataset.get("kind")
    if kind == "sbm":
        return generate_sbm(dataset.get("blocks", [200, 200]),
                            dataset.get("p_in", 0.1), dataset.get("p_out", 0.01),
                            dataset.get("feature_dim", 16),
                            dataset.get("noise", 0.3), dataset.get("seed", 7))
    if kind == "user_item":
        return generate_user_item(dataset.get("n_users", 120),
                                  dataset.get("n_items", 120),
                                  dataset.get("n_genres", 4),
                                  dataset.get("p_in", 0.2),
                                  dataset.get("p_out", 0.01),
                                  dataset.get("noise", 0.2),
                                  dataset.get("seed", 7))
    if kind == "files":
        return load_graph(dataset["edges"], dataset["features"],
                          dataset.get("labels"))
    raise ConfigError(f"unknown dataset kind '{kind}'")


def resolve_output_dir(config, override=None):
    """CLI --out wins, then the config path, both under $AUXWEIGHT_OUT when
    that is set and the path is relative."""
    path = Path(override) if override else Path(config.output_dir)
    root = os.environ.get("AUXWEIGHT_OUT")
    if root and not path.is_absolute():
        path = Path(root) / path
    return path


def run_experiment(config, out_dir=None):
    """Run every seed, write one CSV + summary per seed, then the aggregate.

    A seed that aborts is reported in place without stopping the others.
    """
    config.validate()
    out = resolve_output_dir(config, out_dir)
    out.mkdir(parents=True, exist_ok=True)
    g = build_graph(config.dataset)
    fingerprint = config.fingerprint()
    per_seed = {}
    completed_metrics = []
    for seed in config.seeds:
        train_cfg = replace(config.train, seed=seed)
        try:
            record = run_scheme(train_cfg, g)
        except AuxweightError as exc:
            record = RunRecord(aborted=True, abort_reason=str(exc))
        record.config_fingerprint = fingerprint
        record.check_monotone()
        write_csv(record, out / f"seed{seed}.csv")
        write_summary(record, out / f"seed{seed}.summary.json")
        per_seed[seed] = record
        if not record.aborted and record.final_metrics:
            completed_metrics.append(record.final_metrics)
    report = {
        "name": config.name,
        "config_fingerprint": fingerprint,
        "seeds": list(config.seeds),
        "completed": len(completed_metrics),
        "aborted": [s for s, r in per_seed.items() if r.aborted],
        "aggregate": aggregate(completed_metrics) if completed_metrics else {},
        "notes": [RANKING_NOTE] if any(m in config.train.metrics
                                       for m in ("mrr", "ndcg")) else [],
    }
    with open(out / "aggregate.json", "w") as fh:
        json.dump(report, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return report


def run_pretrain(config, out_dir=None):
    """Pre-train per seed and save the encoder(+heads) checkpoints."""
    config.validate()
    out = resolve_output_dir(config, out_dir)
    out.mkdir(parents=True, exist_ok=True)
    g = build_graph(config.dataset)
    fingerprint = config.fingerprint()
    aborted = []
    for seed in config.seeds:
        train_cfg = replace(config.train, seed=seed)
        record, ckpt = pretrain(train_cfg, g)
        record.config_fingerprint = fingerprint
        write_csv(record, out / f"pretrain_seed{seed}.csv")
        write_summary(record, out / f"pretrain_seed{seed}.summary.json")
        ckpt.meta["config_fingerprint"] = fingerprint
        ckpt.save(str(out / f"pretrain_seed{seed}"))
        if record.aborted:
            aborted.append(seed)
    return {"aborted": aborted, "seeds": list(config.seeds)}


def rescale_experiment(config, scales=DEFAULT_RESCALE_GRID, out_dir=None):
    """Run the full experiment once per (edge_scale, attr_scale) pair.

    Requires the edge-generation and attribute-generation tasks to be
    configured; emits a matrix report keyed by the scale pair.
    """
    config.validate()
    names = set()
    for entry in config.train.aux_tasks:
        names.add(entry if isinstance(entry, str) else entry.get("name", entry.get("kind")))
    for required in ("edge_generation", "attribute_generation"):
        if required not in names:
            raise ConfigError(f"rescale experiment needs the '{required}' task")
    out = resolve_output_dir(config, out_dir)
    out.mkdir(parents=True, exist_ok=True)
    matrix = {}
    all_completed = True
    for edge_scale, attr_scale in scales:
        scales_map = {"edge_generation": float(edge_scale),
                      "attribute_generation": float(attr_scale)}
        sub = replace(config, train=replace(config.train, loss_scales=scales_map),
                      name=f"{config.name}_edge{edge_scale}_attr{attr_scale}",
                      output_dir=str(out / f"edge{edge_scale}_attr{attr_scale}"))
        report = run_experiment(sub)
        key = f"edge={edge_scale} attr={attr_scale}"
        matrix[key] = report["aggregate"]
        all_completed &= report["completed"] == len(config.seeds)
    result = {"name": config.name, "grid": [list(s) for s in scales],
              "matrix": matrix, "all_completed": all_completed}
    with open(out / "rescale.json", "w") as fh:
        json.dump(result, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return result


def report_directory(path):
    """Re-aggregate the per-seed summaries found in a run directory."""
    path = Path(path)
    summaries = sorted(path.glob("seed*.summary.json"))
    if not summaries:
        raise ConfigError(f"no seed summaries under {path}")
    metrics = []
    aborted = []
    for p in summaries:
        with open(p) as fh:
            s = json.load(fh)
        if s.get("aborted"):
            aborted.append(p.name)
        elif s.get("final_metrics"):
            metrics.append(s["final_metrics"])
    return {"aggregate": aggregate(metrics) if metrics else {},
            "completed": len(metrics), "aborted": aborted}
