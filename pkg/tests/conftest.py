import numpy as np
import pytest

from parr.agent import AgentConfig, ParrAgent
from parr.envs import KeyDoorWorld, StickyActions, clip_reward
from parr.nn import predict
from parr.novelty import NoveltyConfig
from parr.replay import Experience


def fill_random(agent, env, n, seed=0):
    rng = np.random.default_rng(seed)
    obs = env.reset(seed)
    for _ in range(n):
        a = int(rng.integers(env.n_actions))
        out = env.step(a)
        agent.admit_experience(Experience(obs, a, clip_reward(out.reward), out.next_obs, out.terminal))
        obs = env.reset() if out.done else out.next_obs


SMALL_NOVELTY = NoveltyConfig(outputs=8, fixed_hidden=(16,), predictor_hidden=(16, 16), epochs=1)


@pytest.fixture
def small_agent():
    """Agent on a 5x5 KeyDoor with 300 random experiences, not yet refreshed."""
    env = StickyActions(KeyDoorWorld(5, 5, key=(4, 4), door=(0, 4), step_limit=40), 0.0, 1)
    cfg = AgentConfig(gamma=0.9, beta=0.5, burn_in=300, capacity=256, hidden=(16, 16), batch_size=16,
                      refresh_interval=50)
    agent = ParrAgent(cfg, env.obs_dim, env.n_actions, SMALL_NOVELTY, seed=3)
    fill_random(agent, env, 300, seed=5)
    return agent, env


def external_targets(agent):
    """Independent recomputation of (q_pred, target) for every live record."""
    rp, c = agent.replay, agent.config
    n = rp.count
    q_s = predict(agent.online, agent.q_spec, rp.s[:n])
    q_next = predict(agent.online, agent.q_spec, rp.s_next[:n])
    q_pred = q_s[np.arange(n), rp.a[:n]]
    target = np.empty(n)
    for i in range(n):
        bonus = c.beta * rp.novelty[i]
        if rp.terminal[i]:
            target[i] = rp.r[i] + (bonus if c.terminal_gets_novelty else 0.0)
        else:
            target[i] = rp.r[i] + bonus + c.gamma * q_next[i].max()
    return q_pred, target


def checked_refresh(agent, **kwargs):
    """Refresh and assert the post-refresh invariants on every record."""
    exp_before = agent.replay.experience_checksum()
    online_before = agent.online.checksum()
    report = agent.refresh(**kwargs)
    rp = agent.replay
    n = rp.count
    assert np.array_equal(rp.priority[:n], np.abs(rp.q_pred[:n] - rp.target[:n]))
    q_pred, target = external_targets(agent)
    assert np.max(np.abs(q_pred - rp.q_pred[:n])) <= 1e-12
    assert np.max(np.abs(target - rp.target[:n])) <= 1e-12
    assert rp.experience_checksum() == exp_before
    assert agent.online.checksum() == online_before
    assert not report.sigma_floored
    return report


def instrument(agent):
    """Route every refresh of ``agent`` through :func:`checked_refresh`."""
    plain = agent.refresh
    calls = []

    def wrapped(**kwargs):
        agent.refresh = plain
        try:
            report = checked_refresh(agent, **kwargs)
        finally:
            agent.refresh = wrapped
        calls.append(report.ordinal)
        return report

    agent.refresh = wrapped
    return calls


def keydoor_states(cells, has_key=False):
    env = KeyDoorWorld()
    out = []
    for x, y in cells:
        env.set_state({"pos": [x, y], "has_key": bool(has_key), "steps": 0})
        out.append(env.observe())
    return np.array(out)


def rare_common_replay(seed):
    """1023 states from a 3x3 patch near the start plus one far corner."""
    rng = np.random.default_rng(seed)
    patch = [(x, y) for x in range(3) for y in range(3)]
    common = keydoor_states([patch[i] for i in rng.integers(len(patch), size=1023)])
    rare = keydoor_states([(9, 5)])
    states = np.concatenate([common, rare])
    order = rng.permutation(len(states))
    return states[order], int(np.flatnonzero(order == len(states) - 1)[0])


# --- acceptance reporting ----------------------------------------------------

ACCEPTANCE: dict[int, tuple[str, str]] = {}


def record_criterion(number: int, ok: bool, detail: str):
    ACCEPTANCE[number] = ("PASS" if ok else "FAIL", detail)
    print(f"acceptance criterion {number:2d}: {ACCEPTANCE[number][0]}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        verdict, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {verdict}  {detail}")
