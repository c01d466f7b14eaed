"""Sum tree over float64 leaf masses with O(log n) prefix-sum lookup.

The kernels come from the compiled ``_sumtree`` extension when it is built,
otherwise from the numpy fallback. Set ``PARR_PURE_PYTHON=1`` to force the
fallback. Both backends give bit-identical trees and lookups.
"""
from __future__ import annotations

import os

import numpy as np

from . import _sumtree_py

if os.environ.get("PARR_PURE_PYTHON"):
    _kernels = _sumtree_py
else:
    try:
        from . import _sumtree as _kernels
    except ImportError:
        _kernels = _sumtree_py

BACKEND = "compiled" if _kernels is not _sumtree_py else "python"


class SumTree:
    def __init__(self, capacity: int, kernels=None):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = int(capacity)
        self.n_leaves = 1 << max(0, (self.capacity - 1).bit_length())
        self.tree = np.zeros(2 * self.n_leaves)
        self._k = kernels if kernels is not None else _kernels

    @property
    def total(self) -> float:
        return float(self.tree[1])

    def leaves(self) -> np.ndarray:
        return self.tree[self.n_leaves:self.n_leaves + self.capacity]

    def __getitem__(self, i: int) -> float:
        return float(self.tree[self.n_leaves + i])

    def update(self, idx, values):
        idx = np.ascontiguousarray(np.atleast_1d(idx), dtype=np.int64)
        values = np.ascontiguousarray(np.broadcast_to(np.asarray(values, dtype=np.float64), idx.shape))
        if idx.size == 0:
            return
        if idx.min() < 0 or idx.max() >= self.capacity:
            raise IndexError("leaf index out of range")
        self._k.update(self.tree, self.n_leaves, idx, values)

    def set_all(self, values: np.ndarray):
        """Overwrite every leaf (length ``capacity``) and rebuild the tree."""
        self.tree[self.n_leaves:self.n_leaves + self.capacity] = values
        self._k.rebuild(self.tree, self.n_leaves)

    def find(self, mass) -> np.ndarray:
        mass = np.ascontiguousarray(np.atleast_1d(mass), dtype=np.float64)
        return self._k.find(self.tree, self.n_leaves, mass)
