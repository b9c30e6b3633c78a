"""Per-step run records: the CSV row schema behind the curve logs, plus
multi-seed aggregation.

One row per (step, task). Column order is fixed: step, phase, task_id,
loss, weight, sim, valid_metric; the last three are empty when not
applicable. Floats are written with repr() so parsing is lossless.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import UsageError

CSV_HEADER = "step,phase,task_id,loss,weight,sim,valid_metric"


@dataclass
class Row:
    step: int
    phase: str
    task_id: int
    loss: float
    weight: float = None
    sim: float = None
    valid_metric: float = None


@dataclass
class RunRecord:
    """Everything one seeded run produced."""

    rows: list = field(default_factory=list)
    final_metrics: dict = field(default_factory=dict)
    config_fingerprint: str = ""
    wall_clock: float = 0.0
    aborted: bool = False
    abort_reason: str = ""

    def log(self, step, phase, task_id, loss, weight=None, sim=None,
            valid_metric=None):
        self.rows.append(Row(step, phase, task_id, float(loss),
                             None if weight is None else float(weight),
                             None if sim is None else float(sim),
                             None if valid_metric is None else float(valid_metric)))

    def check_monotone(self):
        steps = [r.step for r in self.rows]
        if any(b < a for a, b in zip(steps, steps[1:])):
            raise UsageError("record rows out of step order")
        return self


def _cell(value):
    return "" if value is None else repr(value)


def write_csv(record, path):
    with open(path, "w") as fh:
        fh.write(CSV_HEADER + "\n")
        for r in record.rows:
            fh.write(f"{r.step},{r.phase},{r.task_id},{_cell(r.loss)},"
                     f"{_cell(r.weight)},{_cell(r.sim)},{_cell(r.valid_metric)}\n")


def read_csv(path):
    """Parse a record CSV back into rows; lossless for repr-written floats."""
    rows = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != CSV_HEADER:
            raise UsageError(f"unexpected CSV header: {header!r}")
        for line in fh:
            parts = line.rstrip("\n").split(",")
            if len(parts) != 7:
                raise UsageError(f"malformed record row: {line!r}")
            rows.append(Row(int(parts[0]), parts[1], int(parts[2]),
                            float(parts[3]),
                            None if parts[4] == "" else float(parts[4]),
                            None if parts[5] == "" else float(parts[5]),
                            None if parts[6] == "" else float(parts[6])))
    return rows


def write_summary(record, path):
    with open(path, "w") as fh:
        json.dump({
            "final_metrics": record.final_metrics,
            "config_fingerprint": record.config_fingerprint,
            "wall_clock": record.wall_clock,
            "aborted": record.aborted,
            "abort_reason": record.abort_reason,
            "steps": max((r.step for r in record.rows), default=0),
        }, fh, indent=1, sort_keys=True)
        fh.write("\n")


def aggregate(per_seed_metrics):
    """Mean and sample standard deviation per metric over seeds.

    Seed order does not matter; a single seed reports std 0.
    """
    if not per_seed_metrics:
        raise UsageError("aggregate: no seed results")
    out = {}
    for key in sorted(per_seed_metrics[0]):
        values = np.array([m[key] for m in per_seed_metrics], dtype=np.float64)
        # reduce in sorted order so seed order cannot change the result
        ordered = np.sort(values)
        std = float(ordered.std(ddof=1)) if len(values) > 1 else 0.0
        out[key] = {"mean": float(ordered.mean()), "std": std,
                    "values": [float(v) for v in values]}
    return out
