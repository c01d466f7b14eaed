"""Command line entry point: ``parr <subcommand> --config CONFIG [--out DIR]``."""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from . import experiments
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ConfigError, RunConfig, read_config, write_config
from .metrics import write_metrics, write_reports
from .nn import CheckpointError, ContractError
from .training import Trainer, evaluate_greedy, make_base_env

log = logging.getLogger("parr")

CHECKPOINT_NAME = "checkpoint.bin"


def _load(args) -> RunConfig:
    cfg = read_config(args.config)
    if args.seed_override is not None:
        cfg = dataclasses.replace(cfg, run=dataclasses.replace(cfg.run, seed=args.seed_override))
    return cfg


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_train(args) -> int:
    out = _out_dir(args)
    ckpt = out / CHECKPOINT_NAME
    if args.resume:
        trainer = load_checkpoint(ckpt)
        if args.total_steps is not None:
            trainer.cfg.run.total_steps = args.total_steps
    else:
        cfg = _load(args)
        if args.total_steps is not None:
            cfg.run.total_steps = args.total_steps
        trainer = Trainer(cfg)
    write_config(trainer.cfg, out / "config.yaml")
    trainer.run(args.stop_at)
    write_metrics(trainer.rows, out / "metrics.csv")
    write_reports(trainer.reports, out / "refresh_reports.jsonl", include_timings=trainer.cfg.run.record_wall_time)
    save_checkpoint(trainer, ckpt)
    log.info("wrote %d metrics rows to %s", len(trainer.rows), out / "metrics.csv")
    return 0


def cmd_evaluate(args) -> int:
    ckpt = Path(args.checkpoint) if args.checkpoint else Path(args.out) / CHECKPOINT_NAME
    trainer = load_checkpoint(ckpt)
    cfg = _load(args) if args.config else trainer.cfg
    seed = cfg.run.seed if args.seed_override is None else args.seed_override
    mean = evaluate_greedy(trainer.agent, make_base_env(cfg.env, seed + 7), cfg.run.eval_episodes, seed,
                           cfg.env.sticky_p)
    print(f"mean greedy return over {cfg.run.eval_episodes} episodes: {mean!r}")
    return 0


def cmd_compare_modes(args) -> int:
    cfg = _load(args)
    result = experiments.compare_modes(cfg, _out_dir(args))
    for mode, summary in result.summaries.items():
        print(f"{mode}: {summary}")
    print(f"refresh-boundary record equality: {result.first_boundary_equal}")
    return 0 if result.first_boundary_equal else 1


def cmd_equivalence(args) -> int:
    cfg = _load(args)
    try:
        result = experiments.run_equivalence(cfg)
    except ContractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out = _out_dir(args)
    with open(out / "equivalence.csv", "w") as fh:
        fh.write("train_step,max_abs_weight_deviation\n")
        for i, d in enumerate(result.deviations, 1):
            fh.write(f"{i},{d!r}\n")
    print(f"max per-parameter deviation over {result.train_steps} train steps "
          f"({result.refreshes} refreshes): {result.max_deviation:.3e}")
    return 0 if result.max_deviation <= 1e-12 else 1


def cmd_refresh_bench(args) -> int:
    cfg = _load(args)
    rows = experiments.refresh_bench(cfg)
    path = _out_dir(args) / "refresh_bench.csv"
    experiments.write_bench(rows, path)
    for r in rows:
        print(f"size={r['size']:>7d}  total={r['total_ms']:9.1f} ms")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="parr", description="Replay-refresh Q-learning experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text, config_required=True):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=config_required)
        p.add_argument("--out", default="runs/default")
        p.add_argument("--seed-override", type=int, default=None)
        p.set_defaults(func=func)
        return p

    train = add("train", cmd_train, "train one agent", config_required=False)
    train.add_argument("--resume", action="store_true", help="continue from OUT/checkpoint.bin")
    train.add_argument("--total-steps", type=int, default=None, help="override run.total_steps")
    train.add_argument("--stop-at", type=int, default=None,
                       help="pause after this many env steps; the schedule still follows run.total_steps")
    ev = add("evaluate", cmd_evaluate, "greedy evaluation of a checkpoint", config_required=False)
    ev.add_argument("--checkpoint", default=None)
    add("compare-modes", cmd_compare_modes, "online vs snapshot valuation of new experiences")
    add("equivalence", cmd_equivalence, "drop-in equivalence with a target network")
    add("refresh-bench", cmd_refresh_bench, "time refresh phases against replay size")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "train" and not args.resume and not args.config:
        parser.error("train needs --config unless --resume is given")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error in {args.config}: {exc}", file=sys.stderr)
        return 2
    except CheckpointError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
