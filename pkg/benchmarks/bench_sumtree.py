"""Compiled vs numpy sum-tree kernels on the access pattern of training:
sample a batch, then rewrite the sampled priorities. Also times a whole
rebuild, which is what a refresh does.

    python benchmarks/bench_sumtree.py [--capacity 32768] [--batch 32] [--iters 2000]
"""
import argparse
import time

import numpy as np

from parr import _sumtree_py
from parr.sumtree import SumTree

try:
    from parr import _sumtree as _compiled
except ImportError:
    _compiled = None


def time_backend(kernels, capacity, batch, iters, seed=0):
    rng = np.random.default_rng(seed)
    tree = SumTree(capacity, kernels)
    tree.set_all(rng.random(capacity))
    t0 = time.perf_counter()
    for _ in range(iters):
        idx = tree.find(rng.random(batch) * tree.total)
        tree.update(idx, rng.random(batch))
    t1 = time.perf_counter()
    for _ in range(20):
        tree.set_all(rng.random(capacity))
    t2 = time.perf_counter()
    return (t1 - t0) / iters * 1e6, (t2 - t1) / 20 * 1e3, tree.tree.copy()


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--capacity", type=int, default=32768)
    ap.add_argument("--batch", type=int, default=32)
    ap.add_argument("--iters", type=int, default=2000)
    args = ap.parse_args(argv)

    backends = [("python", _sumtree_py)]
    if _compiled is not None:
        backends.insert(0, ("compiled", _compiled))
    else:
        print("compiled extension not built; timing the numpy fallback only")

    trees = {}
    print(f"capacity={args.capacity} batch={args.batch} iters={args.iters}")
    print(f"{'backend':>9}  {'sample+update (us)':>18}  {'rebuild (ms)':>12}")
    for name, kernels in backends:
        step_us, rebuild_ms, trees[name] = time_backend(kernels, args.capacity, args.batch, args.iters)
        print(f"{name:>9}  {step_us:18.1f}  {rebuild_ms:12.3f}")
    if len(trees) == 2:
        same = np.array_equal(trees["compiled"], trees["python"])
        print(f"final trees bit-identical: {same}")


if __name__ == "__main__":
    main()
