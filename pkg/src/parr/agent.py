"""Q-learning agent whose replay stores targets and priorities, rewritten
wholesale by a periodic refresh with the online network frozen.

Three valuation modes decide which network values experiences admitted
between refreshes:

* ``online_new``: the current online network.
* ``snapshot_new``: a copy of the online network taken at the last refresh.
* ``target_net``: classic target-network baseline; targets are recomputed
  from the snapshot at sample time by :meth:`ParrAgent.baseline_train_step`.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .nn import (ContractError, NetSpec, OptimizerState, ParamSet, backward, forward, init_params,
                 optimizer_step, predict)
from .novelty import NoveltyConfig, NoveltyPair, novelty_for_new, refresh_novelty
from .replay import Experience, ReplayBuffer, ReplayRecord

MODES = ("online_new", "snapshot_new", "target_net")


@dataclass
class AgentConfig:
    gamma: float = 0.99
    beta: float = 1.0
    refresh_interval: int = 500
    actions_per_train_step: int = 4
    burn_in: int = 2000
    batch_size: int = 32
    capacity: int = 32768
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    # None: a quarter of the post-burn-in budget, filled in by the trainer
    epsilon_decay_steps: int | None = None
    mode: str = "online_new"
    terminal_gets_novelty: bool = False
    priority_exponent: float = 1.0
    priority_floor: float = 1e-3
    importance_sampling: bool = False
    hidden: tuple[int, ...] = (64, 64)
    activation_slope: float = 0.01
    lr: float = 1e-3
    novelty_seed: int | None = None

    def validate(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ContractError("gamma must be in [0, 1)")
        if self.beta < 0:
            raise ContractError("beta must be >= 0")
        if self.refresh_interval < 1:
            raise ContractError("refresh_interval must be >= 1")
        if self.actions_per_train_step < 1 or self.burn_in < 1 or self.batch_size < 1 or self.capacity < 1:
            raise ContractError("actions_per_train_step, burn_in, batch_size and capacity must be >= 1")
        if self.mode not in MODES:
            raise ContractError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 0.0 <= self.epsilon_end <= self.epsilon_start <= 1.0:
            raise ContractError("need 0 <= epsilon_end <= epsilon_start <= 1")


def compute_targets(q_next: np.ndarray, r, terminal, novelty, gamma: float, beta: float,
                    terminal_gets_novelty: bool = False) -> np.ndarray:
    """``r + beta*novelty + gamma*max_a Q(s', a)``; terminal transitions drop
    the bootstrap (and the novelty bonus unless ``terminal_gets_novelty``)."""
    r = np.asarray(r, dtype=np.float64)
    live = 1.0 - np.asarray(terminal, dtype=np.float64)
    bonus_on = np.ones_like(live) if terminal_gets_novelty else live
    return r + beta * np.asarray(novelty, dtype=np.float64) * bonus_on + gamma * np.max(q_next, axis=-1) * live


def compute_target(params: ParamSet, spec: NetSpec, exp: Experience, novelty: float, gamma: float,
                   beta: float, terminal_gets_novelty: bool = False) -> float:
    if novelty < 0:
        raise ContractError("novelty must be >= 0")
    q_next = predict(params, spec, exp.s_next)
    return float(compute_targets(q_next, exp.r, exp.terminal, novelty, gamma, beta, terminal_gets_novelty))


@dataclass
class RefreshReport:
    ordinal: int
    count: int
    sigma: float
    sigma_floored: bool
    timings: dict = field(default_factory=dict)
    total_time: float = 0.0
    priority_min: float = 0.0
    priority_mean: float = 0.0
    priority_max: float = 0.0
    target_min: float = 0.0
    target_mean: float = 0.0
    target_max: float = 0.0
    novelty_mean: float = 0.0
    novelty_max: float = 0.0


class ParrAgent:
    def __init__(self, config: AgentConfig, obs_dim: int, n_actions: int,
                 novelty_config: NoveltyConfig | None = None, seed: int = 0):
        config.validate()
        self.config = config
        self.obs_dim, self.n_actions = int(obs_dim), int(n_actions)
        self.seed = int(seed)
        self.q_spec = NetSpec((obs_dim, *config.hidden, n_actions), config.activation_slope)
        self.online = init_params(self.q_spec, self.seed)
        self.opt = OptimizerState.for_params(self.online, lr=config.lr)
        self.snapshot: ParamSet | None = None
        self.novelty = NoveltyPair.create(obs_dim, novelty_config or NoveltyConfig(), self.seed + 1000)
        self.novelty_seed = config.novelty_seed if config.novelty_seed is not None else self.seed + 2000
        self.replay = ReplayBuffer(config.capacity, obs_dim, config.priority_exponent, config.priority_floor)
        self.rng_act = np.random.default_rng([self.seed, 1])
        self.rng_sample = np.random.default_rng([self.seed, 2])
        self.env_steps = 0
        self.train_steps = 0
        self.refreshes = 0
        # (refresh ordinal, records equal) for the first admission after each refresh
        self.boundary_checks: list[tuple[int, bool]] = []
        self.boundary_records: dict[int, ReplayRecord] = {}
        self.check_boundary = False
        self._admitted_since_refresh = 0

    # --- acting ----------------------------------------------------------

    def epsilon(self) -> float:
        c = self.config
        if self.env_steps < c.burn_in:
            return 1.0
        decay = c.epsilon_decay_steps or 1
        frac = min(1.0, (self.env_steps - c.burn_in) / decay)
        return c.epsilon_start + frac * (c.epsilon_end - c.epsilon_start)

    def q_values(self, s) -> np.ndarray:
        return predict(self.online, self.q_spec, s)

    def greedy_action(self, s) -> int:
        # argmax takes the lowest index on ties
        return int(np.argmax(self.q_values(s)))

    def act(self, s, rng: np.random.Generator | None = None, epsilon: float | None = None) -> int:
        rng = self.rng_act if rng is None else rng
        if epsilon is None:
            if self.env_steps < self.config.burn_in:
                return int(rng.integers(self.n_actions))
            epsilon = self.epsilon()
        if rng.random() < epsilon:
            return int(rng.integers(self.n_actions))
        return self.greedy_action(s)

    # --- admission -------------------------------------------------------

    def valuation_net(self) -> ParamSet:
        if self.config.mode == "online_new" or self.snapshot is None:
            return self.online
        return self.snapshot

    def value_experience(self, exp: Experience, net: ParamSet) -> ReplayRecord:
        c = self.config
        if self.novelty.sigma is None:
            # burn-in placeholders, overwritten by the first refresh
            return ReplayRecord(exp)
        nov = novelty_for_new(self.novelty, exp.s_next)
        q_pred = float(predict(net, self.q_spec, exp.s)[exp.a])
        target = compute_target(net, self.q_spec, exp, nov, c.gamma, c.beta, c.terminal_gets_novelty)
        return ReplayRecord(exp, q_pred, nov, target, abs(q_pred - target))

    def admit_experience(self, exp: Experience) -> ReplayRecord:
        if not 0 <= exp.a < self.n_actions:
            raise ContractError(f"action {exp.a} out of range")
        record = self.value_experience(exp, self.valuation_net())
        if self.check_boundary and self._admitted_since_refresh == 0 and self.refreshes > 0:
            other = self.value_experience(exp, self.online)
            same = (other.q_pred, other.novelty, other.target, other.priority) == \
                   (record.q_pred, record.novelty, record.target, record.priority)
            self.boundary_checks.append((self.refreshes, same))
            self.boundary_records[self.refreshes] = record
        self._admitted_since_refresh += 1
        self.replay.push(record)
        self.env_steps += 1
        return record

    # --- training --------------------------------------------------------

    def _fit_batch(self, idx: np.ndarray, targets: np.ndarray) -> float:
        rp = self.replay
        b = len(idx)
        out, cache = forward(self.online, self.q_spec, rp.s[idx])
        rows = np.arange(b)
        q = out[rows, rp.a[idx]]
        td = q - targets
        if self.config.importance_sampling:
            p = rp.mass(rp.priority[idx]) / rp.tree.total
            w = 1.0 / (rp.count * p)
            w /= w.max()
        else:
            w = np.ones(b)
        loss = float(np.mean(w * td * td))
        grad_out = np.zeros_like(out)
        grad_out[rows, rp.a[idx]] = 2.0 * w * td / b
        grads = backward(self.online, self.q_spec, cache, grad_out)
        optimizer_step(self.online, grads, self.opt)
        rp.set_priority(idx, np.abs(td))
        self.train_steps += 1
        return loss

    def train_step(self, rng: np.random.Generator | None = None) -> float:
        """Regress Q(s, a) onto the stored targets of one sampled batch."""
        if self.refreshes == 0:
            raise ContractError("train_step before the first refresh")
        rng = self.rng_sample if rng is None else rng
        idx = self.replay.sample_indices(self.config.batch_size, rng)
        return self._fit_batch(idx, self.replay.target[idx])

    def baseline_train_step(self, rng: np.random.Generator | None = None) -> float:
        """Target-network step: targets come live from the snapshot."""
        c = self.config
        if c.mode != "target_net":
            raise ContractError("baseline_train_step requires mode 'target_net'")
        if self.refreshes == 0 or self.snapshot is None:
            raise ContractError("baseline_train_step before the first refresh")
        rng = self.rng_sample if rng is None else rng
        rp = self.replay
        idx = rp.sample_indices(c.batch_size, rng)
        q_next = predict(self.snapshot, self.q_spec, rp.s_next[idx])
        targets = compute_targets(q_next, rp.r[idx], rp.terminal[idx], rp.novelty[idx], c.gamma, c.beta,
                                  c.terminal_gets_novelty)
        return self._fit_batch(idx, targets)

    def step_train(self) -> float:
        if self.config.mode == "target_net":
            return self.baseline_train_step()
        return self.train_step()

    # --- refresh ---------------------------------------------------------

    def refresh(self, novelty_seed: int | None = None) -> RefreshReport:
        """Recompute novelty, predicted Q, target and priority of every stored
        record with the online weights held fixed."""
        c = self.config
        rp = self.replay
        if rp.count == 0:
            raise ContractError("cannot refresh an empty replay")
        seed = self.novelty_seed if novelty_seed is None else novelty_seed
        t_start = time.perf_counter()
        order = rp.iterate_oldest_to_newest()
        nov = refresh_novelty(self.novelty, rp.s_next[order], seed=seed)
        t_nov = time.perf_counter()

        q_s = predict(self.online, self.q_spec, rp.s[order])
        q_next = predict(self.online, self.q_spec, rp.s_next[order])
        t_q = time.perf_counter()

        q_pred = q_s[np.arange(len(order)), rp.a[order]]
        target = compute_targets(q_next, rp.r[order], rp.terminal[order], nov.novelty, c.gamma, c.beta,
                                 c.terminal_gets_novelty)
        priority = np.abs(q_pred - target)
        slot = np.empty((4, rp.count))
        slot[:, order] = (q_pred, nov.novelty, target, priority)
        rp.write_refreshed(*slot)
        t_write = time.perf_counter()

        if c.mode != "online_new":
            self.snapshot = self.online.copy()
        t_end = time.perf_counter()

        self.refreshes += 1
        self._admitted_since_refresh = 0
        timings = dict(nov.timings)
        # the novelty phase's bookkeeping overhead goes to its error pass
        timings["novelty_errors"] += (t_nov - t_start) - sum(nov.timings.values())
        timings["q_values"] = t_q - t_nov
        timings["targets_priorities"] = t_write - t_q
        timings["snapshot"] = t_end - t_write
        return RefreshReport(
            ordinal=self.refreshes, count=rp.count, sigma=nov.sigma, sigma_floored=nov.sigma_floored,
            timings=timings, total_time=t_end - t_start,
            priority_min=float(priority.min()), priority_mean=float(priority.mean()),
            priority_max=float(priority.max()),
            target_min=float(target.min()), target_mean=float(target.mean()), target_max=float(target.max()),
            novelty_mean=float(nov.novelty.mean()), novelty_max=float(nov.novelty.max()))
