"""Per-refresh metrics rows and their CSV file."""
from __future__ import annotations

import csv
import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

METRICS_HEADER = ["refresh", "env_steps", "train_steps", "eval_return", "mean_novelty", "max_novelty",
                  "sigma", "mean_priority", "loss_ma", "wall_ms"]


@dataclass
class MetricsRow:
    refresh: int
    env_steps: int
    train_steps: int
    eval_return: float
    mean_novelty: float
    max_novelty: float
    sigma: float
    mean_priority: float
    loss_ma: float
    wall_ms: float

    def cells(self) -> list[str]:
        # repr keeps every float bit, so identical runs give identical files
        return [repr(getattr(self, k)) for k in METRICS_HEADER]


def write_metrics(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRICS_HEADER)
        for row in rows:
            w.writerow(row.cells())


def read_metrics(path) -> list[MetricsRow]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != METRICS_HEADER:
            raise ValueError(f"unexpected metrics header {header}")
        rows = []
        for cells in reader:
            vals = dict(zip(header, cells))
            rows.append(MetricsRow(
                int(vals["refresh"]), int(vals["env_steps"]), int(vals["train_steps"]),
                *(float(vals[k]) for k in METRICS_HEADER[3:])))
        return rows


def write_reports(reports, path, include_timings: bool = True):
    """One JSON object per line per RefreshReport."""
    with open(path, "w") as fh:
        for rep in reports:
            d = dataclasses.asdict(rep)
            if not include_timings:
                d.pop("timings")
                d.pop("total_time")
            fh.write(json.dumps(d, sort_keys=True) + "\n")


def first_successes(rows, threshold: float, k: int = 10) -> dict:
    """First and k-th evaluation reaching ``threshold`` (env steps, refresh)."""
    hits = [r for r in rows if r.eval_return >= threshold]
    out = {"first_env_steps": None, "first_refresh": None, "kth_env_steps": None, "kth_refresh": None,
           "successes": len(hits)}
    if hits:
        out["first_env_steps"], out["first_refresh"] = hits[0].env_steps, hits[0].refresh
    if len(hits) >= k:
        out["kth_env_steps"], out["kth_refresh"] = hits[k - 1].env_steps, hits[k - 1].refresh
    return out


def read_jsonl(path) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]
