"""Numpy fallback for the sum-tree kernels (same layout and arithmetic as
the compiled version, vectorized across the batch instead of looped)."""
import numpy as np


def update(tree: np.ndarray, n_leaves: int, idx: np.ndarray, values: np.ndarray):
    idx = np.asarray(idx, dtype=np.int64)
    tree[n_leaves + idx] = values
    nodes = np.unique((n_leaves + idx) >> 1)
    while nodes[0] >= 1:
        tree[nodes] = tree[2 * nodes] + tree[2 * nodes + 1]
        nodes = np.unique(nodes >> 1)


def rebuild(tree: np.ndarray, n_leaves: int):
    lo = n_leaves
    while lo > 1:
        hi, lo = lo, lo >> 1
        tree[lo:hi] = tree[2 * lo:2 * hi:2] + tree[2 * lo + 1:2 * hi:2]


def find(tree: np.ndarray, n_leaves: int, mass: np.ndarray) -> np.ndarray:
    u = np.array(mass, dtype=np.float64)
    node = np.ones(u.shape[0], dtype=np.int64)
    while n_leaves > 1 and node[0] < n_leaves:
        left = 2 * node
        left_mass = tree[left]
        go_right = u >= left_mass
        u = np.where(go_right, u - left_mass, u)
        node = left + go_right
    return node - n_leaves
