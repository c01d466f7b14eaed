"""Small environments: a sparse-reward key/door gridworld, a tabular chain
with an exact value-iteration oracle, and the sticky-action wrapper.

Every environment exposes ``reset(seed=None)``, ``step(action)``,
``n_actions``, ``obs_dim`` and ``get_state()/set_state()`` (plain dicts, so
checkpoints can carry them).
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .nn import ContractError


@dataclass
class StepOutcome:
    reward: float
    next_obs: np.ndarray
    terminal: bool
    # episode cut by a length limit; the caller should reset
    truncated: bool = False

    @property
    def done(self) -> bool:
        return self.terminal or self.truncated


def clip_reward(r: float) -> float:
    return min(1.0, max(-1.0, float(r)))


# up, down, left, right
MOVES = ((0, -1), (0, 1), (-1, 0), (1, 0))


class KeyDoorWorld:
    """Grid with a key and a locked door.

    Entering the key cell picks the key up (reward 0). Entering the door cell
    while holding the key ends the episode with reward 1; without the key the
    door cell is an ordinary cell. Running out of steps ends the episode with
    reward 0 and is reported as terminal.

    Observation: one-hot x, one-hot y, has_key, key_present.
    """

    n_actions = 4

    def __init__(self, width: int = 10, height: int = 10, start=(0, 0), key=(9, 9),
                 door=(0, 9), step_limit: int = 200):
        self.width, self.height = int(width), int(height)
        self.start, self.key, self.door = tuple(start), tuple(key), tuple(door)
        self.step_limit = int(step_limit)
        for name, (x, y) in (("start", self.start), ("key", self.key), ("door", self.door)):
            if not (0 <= x < self.width and 0 <= y < self.height):
                raise ContractError(f"{name} position {(x, y)} outside {self.width}x{self.height} grid")
        if self.key == self.door:
            raise ContractError("key and door must be in different cells")
        if self.step_limit < 1:
            raise ContractError("step_limit must be >= 1")
        self.obs_dim = self.width + self.height + 2
        self.pos = self.start
        self.has_key = False
        self.steps = 0

    def observe(self) -> np.ndarray:
        obs = np.zeros(self.obs_dim)
        x, y = self.pos
        obs[x] = 1.0
        obs[self.width + y] = 1.0
        obs[-2] = float(self.has_key)
        obs[-1] = float(not self.has_key)
        return obs

    def reset(self, seed: int | None = None) -> np.ndarray:
        # the layout is fixed, so the seed has nothing to randomize
        self.pos = self.start
        self.has_key = self.start == self.key
        self.steps = 0
        return self.observe()

    def _move(self, pos, has_key, action):
        dx, dy = MOVES[action]
        x = min(max(pos[0] + dx, 0), self.width - 1)
        y = min(max(pos[1] + dy, 0), self.height - 1)
        pos = (x, y)
        if pos == self.key:
            has_key = True
        return pos, has_key

    def step(self, action: int) -> StepOutcome:
        if not 0 <= action < self.n_actions:
            raise ContractError(f"action {action} not in 0..{self.n_actions - 1}")
        self.pos, self.has_key = self._move(self.pos, self.has_key, int(action))
        self.steps += 1
        if self.pos == self.door and self.has_key:
            return StepOutcome(1.0, self.observe(), True)
        if self.steps >= self.step_limit:
            return StepOutcome(0.0, self.observe(), True, truncated=True)
        return StepOutcome(0.0, self.observe(), False)

    def shortest_solution(self) -> int | None:
        """BFS over (position, has_key) from reset; steps to door-with-key."""
        start = (self.start, self.start == self.key)
        dist = {start: 0}
        queue = deque([start])
        while queue:
            state = queue.popleft()
            for a in range(self.n_actions):
                nxt = self._move(state[0], state[1], a)
                if nxt in dist:
                    continue
                dist[nxt] = dist[state] + 1
                if nxt[0] == self.door and nxt[1]:
                    return dist[nxt]
                queue.append(nxt)
        return None

    def get_state(self) -> dict:
        return {"pos": list(self.pos), "has_key": self.has_key, "steps": self.steps}

    def set_state(self, state: dict):
        self.pos = tuple(state["pos"])
        self.has_key = bool(state["has_key"])
        self.steps = int(state["steps"])


class ChainMDP:
    """Tabular MDP with explicit ``transitions[s, a, s']`` and ``rewards[s, a]``.

    The chain is continuing: ``terminal`` is never set, episodes are only cut
    (``truncated``) after ``episode_length`` steps so learned values match
    the discounted infinite-horizon ``Q*``. ``start`` is a state index or
    ``"uniform"`` for a uniformly drawn start state.
    """

    def __init__(self, transitions: np.ndarray, rewards: np.ndarray, start=0,
                 episode_length: int = 50, seed: int = 0):
        self.transitions = np.asarray(transitions, dtype=np.float64)
        self.rewards = np.asarray(rewards, dtype=np.float64)
        n, a, n2 = self.transitions.shape
        if n != n2 or self.rewards.shape != (n, a):
            raise ContractError("transition table must be (S, A, S) and rewards (S, A)")
        if np.any(self.transitions < 0) or np.any(np.abs(self.transitions.sum(axis=2) - 1.0) > 1e-12):
            raise ContractError("transition rows must be probability distributions")
        if start != "uniform" and not 0 <= int(start) < n:
            raise ContractError(f"start state {start} out of range")
        self.n_states, self.n_actions = n, a
        self.obs_dim = n
        self.start = start
        self.episode_length = int(episode_length)
        self.rng = np.random.default_rng(seed)
        self.state = 0 if start == "uniform" else int(start)
        self.steps = 0
        self._cdf = np.cumsum(self.transitions, axis=2)

    @classmethod
    def river_swim(cls, n_states: int = 8, left_reward: float = 0.05, right_reward: float = 1.0,
                   p_forward: float = 0.7, p_back: float = 0.1, **kwargs) -> "ChainMDP":
        """Two-action chain: 'left' is safe and deterministic, 'right' swims
        against a current. Small reward for staying at the left end, large
        reward for pushing at the right end."""
        n = n_states
        p_stay = 1.0 - p_forward - p_back
        if n < 2 or min(p_forward, p_back, p_stay) < 0:
            raise ContractError("invalid river-swim parameters")
        T = np.zeros((n, 2, n))
        R = np.zeros((n, 2))
        for s in range(n):
            T[s, 0, max(s - 1, 0)] = 1.0
            T[s, 1, min(s + 1, n - 1)] += p_forward
            T[s, 1, s] += p_stay
            T[s, 1, max(s - 1, 0)] += p_back
        R[0, 0] = left_reward
        R[n - 1, 1] = right_reward
        return cls(T, R, **kwargs)

    def observe(self) -> np.ndarray:
        obs = np.zeros(self.n_states)
        obs[self.state] = 1.0
        return obs

    def reset(self, seed: int | None = None) -> np.ndarray:
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        if self.start == "uniform":
            self.state = int(self.rng.integers(self.n_states))
        else:
            self.state = int(self.start)
        self.steps = 0
        return self.observe()

    def step(self, action: int) -> StepOutcome:
        if not 0 <= action < self.n_actions:
            raise ContractError(f"action {action} not in 0..{self.n_actions - 1}")
        reward = float(self.rewards[self.state, action])
        u = self.rng.random()
        cdf = self._cdf[self.state, action]
        self.state = min(int(np.searchsorted(cdf, u, side="right")), self.n_states - 1)
        self.steps += 1
        return StepOutcome(reward, self.observe(), False, truncated=self.steps >= self.episode_length)

    def get_state(self) -> dict:
        return {"state": self.state, "steps": self.steps, "rng": self.rng.bit_generator.state}

    def set_state(self, state: dict):
        self.state = int(state["state"])
        self.steps = int(state["steps"])
        self.rng.bit_generator.state = state["rng"]


def value_iteration(mdp: ChainMDP, gamma: float, tol: float = 1e-10, max_iter: int = 1_000_000) -> np.ndarray:
    """Optimal Q-table of a tabular MDP; stops once the sup-norm Bellman
    residual of the returned table is <= tol."""
    if not 0.0 <= gamma < 1.0:
        raise ContractError("gamma must be in [0, 1)")
    if tol <= 0:
        raise ContractError("tol must be positive")
    T, R = mdp.transitions, mdp.rewards
    q = np.zeros_like(R)
    for _ in range(max_iter):
        q_new = R + gamma * T @ q.max(axis=1)
        if np.max(np.abs(q_new - q)) <= tol:
            return q
        q = q_new
    raise RuntimeError("value iteration did not converge")


def bellman_residual(mdp: ChainMDP, q: np.ndarray, gamma: float) -> float:
    return float(np.max(np.abs(mdp.rewards + gamma * mdp.transitions @ q.max(axis=1) - q)))


class StickyActions:
    """With probability ``p`` the previously executed action is repeated in
    place of the requested one. The first step of an episode always runs
    the requested action."""

    def __init__(self, env, p: float = 0.25, seed: int = 0):
        if not 0.0 <= p < 1.0:
            raise ContractError("sticky probability must be in [0, 1)")
        self.env = env
        self.p = float(p)
        self.rng = np.random.default_rng(seed)
        self.prev_action: int | None = None
        self.last_was_sticky = False

    @property
    def n_actions(self) -> int:
        return self.env.n_actions

    @property
    def obs_dim(self) -> int:
        return self.env.obs_dim

    def reset(self, seed: int | None = None) -> np.ndarray:
        self.prev_action = None
        self.last_was_sticky = False
        return self.env.reset(seed)

    def step(self, action: int) -> StepOutcome:
        if not 0 <= action < self.n_actions:
            raise ContractError(f"action {action} not in 0..{self.n_actions - 1}")
        # always draw, so the stream position depends only on the step count
        u = self.rng.random()
        self.last_was_sticky = self.prev_action is not None and u < self.p
        executed = self.prev_action if self.last_was_sticky else int(action)
        self.prev_action = executed
        return self.env.step(executed)

    def get_state(self) -> dict:
        return {"inner": self.env.get_state(), "rng": self.rng.bit_generator.state,
                "prev_action": self.prev_action}

    def set_state(self, state: dict):
        self.env.set_state(state["inner"])
        self.rng.bit_generator.state = state["rng"]
        self.prev_action = state["prev_action"]


def sticky_wrap(env, p: float, seed: int) -> StickyActions:
    return StickyActions(env, p, seed)
