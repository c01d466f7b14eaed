"""Training loop: burn-in, then acting interleaved with training, a refresh
every ``refresh_interval`` train steps, and a greedy evaluation after each
refresh."""
from __future__ import annotations

import dataclasses
import logging
import time

import numpy as np

from .agent import ParrAgent, RefreshReport
from .config import EnvConfig, RunConfig
from .envs import ChainMDP, KeyDoorWorld, StickyActions, clip_reward
from .metrics import MetricsRow
from .replay import Experience

log = logging.getLogger(__name__)


def make_base_env(cfg: EnvConfig, seed: int = 0):
    if cfg.name == "keydoor":
        return KeyDoorWorld(cfg.width, cfg.height, cfg.start, cfg.key, cfg.door, cfg.step_limit)
    if cfg.name == "chain":
        return ChainMDP.river_swim(cfg.n_states, cfg.left_reward, cfg.right_reward, cfg.p_forward, cfg.p_back,
                                   start=cfg.chain_start, episode_length=cfg.episode_length, seed=seed)
    raise ValueError(f"unknown environment {cfg.name!r}")


def make_env(cfg: EnvConfig, seed: int = 0) -> StickyActions:
    return StickyActions(make_base_env(cfg, seed), cfg.sticky_p, seed + 1)


def evaluate_greedy(agent: ParrAgent, env, episodes: int, seed: int, sticky_p: float = 0.25) -> float:
    """Mean undiscounted return of ``episodes`` greedy episodes.

    ``env`` is an unwrapped environment; sticky actions with ``sticky_p``
    are applied on top. Only ``env`` is mutated, never the agent.
    """
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    if isinstance(env, StickyActions):
        env = env.env
    wrapped = StickyActions(env, sticky_p, seed)
    returns = []
    for ep in range(episodes):
        obs = wrapped.reset(seed if ep == 0 else None)
        total = 0.0
        while True:
            out = wrapped.step(agent.greedy_action(obs))
            total += out.reward
            if out.done:
                break
            obs = out.next_obs
        returns.append(total)
    return float(np.mean(returns))


class Trainer:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        seed = cfg.run.seed
        self.env = make_env(cfg.env, seed)
        self.eval_env = make_base_env(cfg.env, seed + 7)
        agent_cfg = dataclasses.replace(cfg.agent)
        if agent_cfg.epsilon_decay_steps is None:
            agent_cfg.epsilon_decay_steps = max(1, (cfg.run.total_steps - agent_cfg.burn_in) // 4)
        self.agent = ParrAgent(agent_cfg, self.env.obs_dim, self.env.n_actions, cfg.novelty, seed)
        self.obs: np.ndarray | None = None
        self.rows: list[MetricsRow] = []
        self.reports: list[RefreshReport] = []
        self.loss_ma = float("nan")
        self.successes = 0
        self.stopped = False
        self.on_refresh = None  # optional callback(trainer, report)

    @property
    def env_steps(self) -> int:
        return self.agent.env_steps

    def run(self, total_steps: int | None = None) -> list[MetricsRow]:
        """Advance until ``total_steps`` environment steps have been taken
        (counted from the start of the run, so a resumed trainer continues)."""
        total = self.cfg.run.total_steps if total_steps is None else total_steps
        while self.agent.env_steps < total and not self.stopped:
            self.step()
        return self.rows

    def step(self):
        agent, c = self.agent, self.agent.config
        if self.obs is None:
            self.obs = self.env.reset(self.cfg.run.seed)
        a = agent.act(self.obs)
        out = self.env.step(a)
        agent.admit_experience(Experience(self.obs, a, clip_reward(out.reward), out.next_obs, out.terminal))
        self.obs = self.env.reset() if out.done else out.next_obs
        n = agent.env_steps
        if n == c.burn_in:
            self._refresh()
        elif n > c.burn_in and (n - c.burn_in) % c.actions_per_train_step == 0:
            loss = agent.step_train()
            self.loss_ma = loss if np.isnan(self.loss_ma) else 0.95 * self.loss_ma + 0.05 * loss
            if agent.train_steps % c.refresh_interval == 0:
                self._refresh()

    def _refresh(self):
        t0 = time.perf_counter()
        report = self.agent.refresh()
        eval_return = evaluate_greedy(self.agent, self.eval_env, self.cfg.run.eval_episodes,
                                      self.cfg.run.seed * 100_003 + report.ordinal, self.cfg.env.sticky_p)
        wall = (time.perf_counter() - t0) * 1000.0 if self.cfg.run.record_wall_time else 0.0
        row = MetricsRow(report.ordinal, self.agent.env_steps, self.agent.train_steps, eval_return,
                         report.novelty_mean, report.novelty_max, report.sigma, report.priority_mean,
                         self.loss_ma, wall)
        self.rows.append(row)
        self.reports.append(report)
        if report.sigma_floored:
            log.warning("refresh %d: novelty sigma floor engaged", report.ordinal)
        log.info("refresh %d env_steps=%d train_steps=%d eval=%.3f sigma=%.3g", report.ordinal,
                 row.env_steps, row.train_steps, eval_return, report.sigma)
        if eval_return >= self.cfg.run.success_threshold:
            self.successes += 1
            k = self.cfg.run.stop_after_successes
            if k and self.successes >= k:
                self.stopped = True
        if self.on_refresh is not None:
            self.on_refresh(self, report)
