"""Experiment drivers behind the CLI: the target-network equivalence
protocol, the valuation-mode comparison and the refresh benchmark."""
from __future__ import annotations

import csv
import dataclasses
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .agent import ParrAgent
from .config import RunConfig
from .envs import clip_reward
from .metrics import first_successes, write_metrics, write_reports
from .nn import ContractError
from .replay import Experience
from .training import Trainer, make_env

log = logging.getLogger(__name__)


# --- drop-in equivalence ---------------------------------------------------

@dataclass
class EquivalenceResult:
    max_deviation: float
    deviations: list[float]  # per train step
    train_steps: int
    refreshes: int


def fill_replay(agents, env, n: int, seed: int):
    """Admit ``n`` uniform-random experiences to every agent in ``agents``."""
    rng = np.random.default_rng([seed, 3])
    obs = env.reset(seed)
    for _ in range(n):
        a = int(rng.integers(env.n_actions))
        out = env.step(a)
        exp = Experience(obs, a, clip_reward(out.reward), out.next_obs, out.terminal)
        for agent in agents:
            agent.admit_experience(exp)
        obs = env.reset() if out.done else out.next_obs


def run_equivalence(cfg: RunConfig, train_steps: int | None = None, mismatch_seeds: bool | None = None
                    ) -> EquivalenceResult:
    """Frozen replay, beta = 0, uniform sampling: train a refresh agent and a
    target-network agent from identical states with a shared sampling seed
    and track the largest per-parameter weight difference."""
    if cfg.agent.beta != 0:
        raise ContractError("the equivalence protocol is only defined for beta = 0")
    steps = cfg.equivalence.train_steps if train_steps is None else train_steps
    mismatch = cfg.equivalence.mismatch_seeds if mismatch_seeds is None else mismatch_seeds
    seed = cfg.run.seed
    # exponent 0 makes every sampling mass 1: uniform regardless of priorities
    base = dataclasses.replace(cfg.agent, priority_exponent=0.0, importance_sampling=False)
    env = make_env(cfg.env, seed)
    parr = ParrAgent(dataclasses.replace(base, mode="online_new"), env.obs_dim, env.n_actions, cfg.novelty, seed)
    tnet = ParrAgent(dataclasses.replace(base, mode="target_net"), env.obs_dim, env.n_actions, cfg.novelty, seed)
    fill_replay([parr, tnet], env, min(cfg.agent.burn_in, cfg.agent.capacity), seed)
    if mismatch:
        tnet.rng_sample = np.random.default_rng([seed + 1, 2])
    parr.refresh()
    tnet.refresh()
    deviations = []
    for k in range(1, steps + 1):
        parr.train_step()
        tnet.baseline_train_step()
        if k % base.refresh_interval == 0:
            parr.refresh()
            tnet.refresh()
        deviations.append(parr.online.max_abs_diff(tnet.online))
    return EquivalenceResult(max(deviations, default=0.0), deviations, steps, parr.refreshes)


# --- valuation-mode comparison ---------------------------------------------

COMPARE_MODES = ("online_new", "snapshot_new")


@dataclass
class CompareResult:
    rows: dict
    summaries: dict
    first_boundary_equal: bool
    boundary_checks: dict


def compare_modes(cfg: RunConfig, out_dir=None, k: int = 10) -> CompareResult:
    rows, summaries, checks, first_records = {}, {}, {}, {}
    out = Path(out_dir) if out_dir is not None else None
    for mode in COMPARE_MODES:
        mode_cfg = dataclasses.replace(cfg, agent=dataclasses.replace(cfg.agent, mode=mode))
        trainer = Trainer(mode_cfg)
        trainer.agent.check_boundary = True
        trainer.run()
        rows[mode] = trainer.rows
        summaries[mode] = first_successes(trainer.rows, cfg.run.success_threshold, k)
        summaries[mode]["refreshes"] = len(trainer.rows)
        checks[mode] = list(trainer.agent.boundary_checks)
        first_records[mode] = trainer.agent.boundary_records.get(1)
        if out is not None:
            write_metrics(trainer.rows, out / f"metrics_{mode}.csv")
            write_reports(trainer.reports, out / f"refresh_reports_{mode}.jsonl",
                          include_timings=cfg.run.record_wall_time)

    a, b = (first_records[m] for m in COMPARE_MODES)
    first_equal = a is not None and b is not None and _same_record(a, b)
    within = all(ok for _, ok in checks["snapshot_new"])
    log.info("refresh-boundary record equality: first post-refresh record identical across modes: %s; "
             "snapshot_new in-run boundary checks equal: %d/%d", first_equal,
             sum(ok for _, ok in checks["snapshot_new"]), len(checks["snapshot_new"]))
    if out is not None:
        _write_side_by_side(rows, out / "compare_metrics.csv")
        with open(out / "compare_summary.csv", "w", newline="") as fh:
            fields = ["mode", "refreshes", "successes", "first_env_steps", "first_refresh",
                      "kth_env_steps", "kth_refresh"]
            w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
            w.writeheader()
            for mode in COMPARE_MODES:
                w.writerow({"mode": mode, **{f: summaries[mode][f] for f in fields[1:]}})
        with open(out / "boundary_check.log", "w") as fh:
            fh.write(f"first_post_refresh_record_identical {first_equal}\n")
            for ordinal, ok in checks["snapshot_new"]:
                fh.write(f"snapshot_new refresh {ordinal} online_equals_snapshot {ok}\n")
    return CompareResult(rows, summaries, first_equal and within, checks)


def _same_record(a, b) -> bool:
    return (a.exp.a == b.exp.a and a.exp.r == b.exp.r and a.exp.terminal == b.exp.terminal
            and np.array_equal(a.exp.s, b.exp.s) and np.array_equal(a.exp.s_next, b.exp.s_next)
            and (a.q_pred, a.novelty, a.target, a.priority) == (b.q_pred, b.novelty, b.target, b.priority))


def _write_side_by_side(rows: dict, path):
    n = max(len(r) for r in rows.values())
    cols = ["refresh"]
    for mode in COMPARE_MODES:
        cols += [f"{mode}_env_steps", f"{mode}_eval_return"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for i in range(n):
            line = [i + 1]
            for mode in COMPARE_MODES:
                r = rows[mode][i] if i < len(rows[mode]) else None
                line += [r.env_steps, repr(r.eval_return)] if r else ["", ""]
            w.writerow(line)


# --- refresh benchmark -----------------------------------------------------

BENCH_PHASES = ["normalizer_fit", "predictor_train", "novelty_errors", "q_values", "targets_priorities",
                "snapshot"]
BENCH_HEADER = ["size"] + [f"{p}_ms" for p in BENCH_PHASES] + ["total_ms"]


def refresh_bench(cfg: RunConfig) -> list[dict]:
    """Time each refresh phase over replays of the configured sizes. Each row
    is the median-total refresh out of ``bench.repeats`` on the same replay."""
    out = []
    seed = cfg.run.seed
    for size in cfg.bench.sizes:
        agent_cfg = dataclasses.replace(cfg.agent, capacity=int(size), mode="snapshot_new")
        env = make_env(cfg.env, seed)
        agent = ParrAgent(agent_cfg, env.obs_dim, env.n_actions, cfg.novelty, seed)
        fill_replay([agent], env, int(size), seed)
        reports = sorted((agent.refresh() for _ in range(max(1, cfg.bench.repeats))),
                         key=lambda r: r.total_time)
        rep = reports[len(reports) // 2]
        row = {"size": int(size)}
        for p in BENCH_PHASES:
            row[f"{p}_ms"] = rep.timings[p] * 1000.0
        row["total_ms"] = rep.total_time * 1000.0
        out.append(row)
        log.info("refresh bench size=%d total=%.1f ms", size, row["total_ms"])
    return out


def write_bench(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=BENCH_HEADER, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(r)
