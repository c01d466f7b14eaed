"""Whole-run checkpoints.

File layout (little-endian)::

    magic "PARRCKPT" | u32 version | u64 header length | header (UTF-8 JSON) | sections

The header holds the config, counters, RNG states, environment state and
metrics so far, plus a ``sections`` table of ``{name, offset, length,
sha256}`` for the binary payloads (networks, optimizer, novelty
normalizer, current observation, replay snapshot). Offsets are relative to
the end of the header.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .agent import RefreshReport
from .config import from_dict
from .metrics import MetricsRow
from .nn import CheckpointError, dump_optimizer, dump_params, load_optimizer, load_params
from .novelty import StateNormStats
from .replay import ReplayBuffer
from .training import Trainer

CKPT_MAGIC = b"PARRCKPT"
CKPT_VERSION = 1


def _array(a: np.ndarray) -> bytes:
    return np.ascontiguousarray(a, dtype="<f8").tobytes()


def _report_dict(report: RefreshReport, keep_times: bool) -> dict:
    d = dataclasses.asdict(report)
    if not keep_times:
        # wall-clock data would make otherwise identical checkpoints differ
        d["timings"], d["total_time"] = {}, 0.0
    return d


def save_checkpoint(trainer: Trainer, path):
    agent = trainer.agent
    sections = {
        "online": dump_params(agent.online, agent.q_spec),
        "optimizer": dump_optimizer(agent.opt, agent.q_spec),
        "fixed_net": dump_params(agent.novelty.fixed_net, agent.novelty.fixed_spec),
        "predictor": dump_params(agent.novelty.predictor, agent.novelty.predictor_spec),
        "norm_mean": _array(agent.novelty.norm.mean),
        "norm_std": _array(agent.novelty.norm.std),
        "replay": agent.replay.dump(),
    }
    if agent.snapshot is not None:
        sections["snapshot"] = dump_params(agent.snapshot, agent.q_spec)
    if trainer.obs is not None:
        sections["obs"] = _array(trainer.obs)
    table, offset = [], 0
    for name, blob in sections.items():
        table.append({"name": name, "offset": offset, "length": len(blob),
                      "sha256": hashlib.sha256(blob).hexdigest()})
        offset += len(blob)
    header = {
        "config": trainer.cfg.to_dict(),
        "agent": {
            "epsilon_decay_steps": agent.config.epsilon_decay_steps,
            "env_steps": agent.env_steps,
            "train_steps": agent.train_steps,
            "refreshes": agent.refreshes,
            "admitted_since_refresh": agent._admitted_since_refresh,
            "novelty_seed": agent.novelty_seed,
            "sigma": agent.novelty.sigma,
            "norm_count": agent.novelty.norm.count,
            "rng_act": agent.rng_act.bit_generator.state,
            "rng_sample": agent.rng_sample.bit_generator.state,
            "boundary_checks": agent.boundary_checks,
            "check_boundary": agent.check_boundary,
        },
        "trainer": {
            "env": trainer.env.get_state(),
            "loss_ma": trainer.loss_ma,
            "successes": trainer.successes,
            "stopped": trainer.stopped,
            "rows": [dataclasses.asdict(r) for r in trainer.rows],
            "reports": [_report_dict(r, trainer.cfg.run.record_wall_time) for r in trainer.reports],
        },
        "sections": table,
    }
    head = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC + struct.pack("<IQ", CKPT_VERSION, len(head)))
        fh.write(head)
        for blob in sections.values():
            fh.write(blob)


def load_checkpoint(path) -> Trainer:
    data = Path(path).read_bytes()
    if data[:8] != CKPT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    try:
        version, head_len = struct.unpack_from("<IQ", data, 8)
    except struct.error:
        raise CheckpointError(f"{path}: truncated checkpoint header") from None
    if version != CKPT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version} (expected {CKPT_VERSION})")
    start = 8 + struct.calcsize("<IQ")
    try:
        header = json.loads(data[start:start + head_len].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt checkpoint header ({exc})") from None
    body = data[start + head_len:]
    sections = {}
    for entry in header["sections"]:
        blob = body[entry["offset"]:entry["offset"] + entry["length"]]
        if len(blob) != entry["length"] or hashlib.sha256(blob).hexdigest() != entry["sha256"]:
            raise CheckpointError(f"{path}: section {entry['name']!r} is corrupt")
        sections[entry["name"]] = blob

    cfg = from_dict(header["config"])
    trainer = Trainer(cfg)
    agent = trainer.agent
    a = header["agent"]
    agent.config.epsilon_decay_steps = a["epsilon_decay_steps"]
    agent.online, _ = load_params(sections["online"])
    agent.opt = load_optimizer(sections["optimizer"])
    agent.snapshot = load_params(sections["snapshot"])[0] if "snapshot" in sections else None
    agent.novelty.fixed_net, _ = load_params(sections["fixed_net"])
    agent.novelty.predictor, _ = load_params(sections["predictor"])
    agent.novelty.norm = StateNormStats(np.frombuffer(sections["norm_mean"], "<f8").copy(),
                                        np.frombuffer(sections["norm_std"], "<f8").copy(), a["norm_count"])
    agent.novelty.sigma = a["sigma"]
    agent.replay = ReplayBuffer.load(sections["replay"])
    agent.env_steps = a["env_steps"]
    agent.train_steps = a["train_steps"]
    agent.refreshes = a["refreshes"]
    agent._admitted_since_refresh = a["admitted_since_refresh"]
    agent.novelty_seed = a["novelty_seed"]
    agent.rng_act.bit_generator.state = a["rng_act"]
    agent.rng_sample.bit_generator.state = a["rng_sample"]
    agent.boundary_checks = [tuple(x) for x in a["boundary_checks"]]
    agent.check_boundary = a["check_boundary"]

    t = header["trainer"]
    trainer.env.set_state(t["env"])
    trainer.obs = np.frombuffer(sections["obs"], "<f8").copy() if "obs" in sections else None
    trainer.loss_ma = t["loss_ma"]
    trainer.successes = t["successes"]
    trainer.stopped = t["stopped"]
    trainer.rows = [MetricsRow(**r) for r in t["rows"]]
    trainer.reports = [RefreshReport(**r) for r in t["reports"]]
    return trainer
