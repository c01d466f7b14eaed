import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from parr import _sumtree_py
from parr.sumtree import BACKEND, SumTree

try:
    from parr import _sumtree as compiled
except ImportError:  # extension not built
    compiled = None

needs_ext = pytest.mark.skipif(compiled is None, reason="compiled sum-tree extension not built")


def test_backend_reported():
    assert BACKEND in ("compiled", "python")


@pytest.mark.parametrize("capacity", [1, 2, 3, 8, 13, 1000])
def test_total_and_find(capacity):
    t = SumTree(capacity, _sumtree_py)
    vals = np.arange(1, capacity + 1, dtype=float)
    t.update(np.arange(capacity), vals)
    assert t.total == vals.sum()
    cum = np.cumsum(vals)
    u = np.linspace(0, vals.sum(), 101, endpoint=False)
    np.testing.assert_array_equal(t.find(u), np.searchsorted(cum, u, side="right"))


def test_mass_conservation_after_random_updates():
    rng = np.random.default_rng(0)
    t = SumTree(777)
    for _ in range(10_000):
        i = rng.integers(777, size=rng.integers(1, 5))
        t.update(i, rng.random(len(i)) * 10)
    direct = t.leaves().sum()
    assert abs(t.total - direct) <= 1e-9 * direct


@needs_ext
@settings(max_examples=50, deadline=None)
@given(st.integers(1, 300), st.integers(0, 2**32 - 1))
def test_backends_bit_identical(capacity, seed):
    rng = np.random.default_rng(seed)
    a, b = SumTree(capacity, compiled), SumTree(capacity, _sumtree_py)
    for _ in range(20):
        idx = rng.integers(capacity, size=rng.integers(1, 8))
        vals = rng.random(len(idx)) * rng.choice([1e-3, 1.0, 1e3])
        # duplicate indices in one batch: last write wins in both
        a.update(idx, vals)
        b.update(idx, vals)
    assert np.array_equal(a.tree, b.tree)
    u = rng.random(64) * a.total
    assert np.array_equal(a.find(u), b.find(u))
    leaves = rng.random(capacity)
    a.set_all(leaves)
    b.set_all(leaves)
    assert np.array_equal(a.tree, b.tree)


def test_incremental_equals_rebuild():
    rng = np.random.default_rng(3)
    vals = rng.random(100)
    a, b = SumTree(100), SumTree(100)
    for i, v in enumerate(vals):
        a.update(i, v)
    b.set_all(vals)
    assert np.array_equal(a.tree, b.tree)


def test_update_rejects_out_of_range():
    with pytest.raises(IndexError):
        SumTree(4).update(4, 1.0)


def test_pure_python_switch_gives_same_training_run():
    """Forcing the numpy fallback at import leaves a training run bit-identical."""
    import os
    import subprocess
    import sys
    script = (
        "import parr.sumtree as st\n"
        "from parr.config import from_dict\n"
        "from parr.training import Trainer\n"
        "cfg = from_dict({'env': {'name': 'keydoor', 'width': 4, 'height': 4, 'key': [3, 3], 'door': [0, 3],"
        " 'step_limit': 30}, 'agent': {'burn_in': 100, 'refresh_interval': 25, 'capacity': 256,"
        " 'hidden': [8], 'batch_size': 8}, 'novelty': {'outputs': 4, 'fixed_hidden': [8],"
        " 'predictor_hidden': [8], 'epochs': 1}, 'run': {'total_steps': 300, 'eval_episodes': 1}})\n"
        "t = Trainer(cfg); t.run()\n"
        "print(st.BACKEND, t.agent.online.checksum(), t.agent.replay.derived_checksum())\n"
    )
    outs = {}
    for flag in ("", "1"):
        env = dict(os.environ, PARR_PURE_PYTHON=flag)
        res = subprocess.run([sys.executable, "-c", script], capture_output=True, text=True, env=env, check=True)
        outs[flag] = res.stdout.split()
    assert outs["1"][0] == "python"
    assert outs[""][1:] == outs["1"][1:]
