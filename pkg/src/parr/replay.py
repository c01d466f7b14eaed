"""Fixed-capacity ring replay that also stores the refreshable fields of
each experience (predicted Q, novelty, target, priority).

Slots fill from 0 upward, so the live slots are always ``0 .. count-1``;
once full, ``cursor`` points at the oldest record.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from .nn import CheckpointError, ContractError
from .sumtree import SumTree


@dataclass
class Experience:
    s: np.ndarray
    a: int
    r: float
    s_next: np.ndarray
    terminal: bool


@dataclass
class ReplayRecord:
    exp: Experience
    q_pred: float = 0.0
    novelty: float = 0.0
    target: float = 0.0
    priority: float = 0.0
    insertion_index: int = -1


class ReplayBuffer:
    def __init__(self, capacity: int, obs_dim: int, priority_exponent: float = 1.0,
                 priority_floor: float = 1e-3, sumtree_kernels=None):
        if capacity < 1:
            raise ContractError("capacity must be >= 1")
        if priority_floor < 0 or priority_exponent < 0:
            raise ContractError("priority exponent and floor must be >= 0")
        self.capacity = int(capacity)
        self.obs_dim = int(obs_dim)
        self.priority_exponent = float(priority_exponent)
        self.priority_floor = float(priority_floor)
        self.s = np.zeros((capacity, obs_dim))
        self.s_next = np.zeros((capacity, obs_dim))
        self.a = np.zeros(capacity, dtype=np.int64)
        self.r = np.zeros(capacity)
        self.terminal = np.zeros(capacity, dtype=bool)
        self.q_pred = np.zeros(capacity)
        self.novelty = np.zeros(capacity)
        self.target = np.zeros(capacity)
        self.priority = np.zeros(capacity)
        self.insertion_index = np.full(capacity, -1, dtype=np.int64)
        self.count = 0
        self.cursor = 0
        self.next_insertion = 0
        self.tree = SumTree(capacity, sumtree_kernels)

    def __len__(self) -> int:
        return self.count

    def mass(self, priority):
        return np.power(np.asarray(priority, dtype=np.float64) + self.priority_floor, self.priority_exponent)

    def get(self, i: int) -> ReplayRecord:
        if not 0 <= i < self.count:
            raise IndexError(f"slot {i} is not live")
        exp = Experience(self.s[i].copy(), int(self.a[i]), float(self.r[i]), self.s_next[i].copy(),
                         bool(self.terminal[i]))
        return ReplayRecord(exp, float(self.q_pred[i]), float(self.novelty[i]), float(self.target[i]),
                            float(self.priority[i]), int(self.insertion_index[i]))

    def push(self, record: ReplayRecord) -> ReplayRecord | None:
        """Store ``record``; return the evicted oldest record when full."""
        exp = record.exp
        if not -1.0 <= exp.r <= 1.0:
            raise ContractError(f"reward {exp.r} is not clipped to [-1, 1]")
        if record.priority < 0 or record.novelty < 0:
            raise ContractError("priority and novelty must be >= 0")
        i = self.cursor
        evicted = self.get(i) if self.count == self.capacity else None
        self.s[i] = exp.s
        self.a[i] = exp.a
        self.r[i] = exp.r
        self.s_next[i] = exp.s_next
        self.terminal[i] = exp.terminal
        self.q_pred[i] = record.q_pred
        self.novelty[i] = record.novelty
        self.target[i] = record.target
        self.priority[i] = record.priority
        self.insertion_index[i] = self.next_insertion
        record.insertion_index = self.next_insertion
        self.next_insertion += 1
        self.tree.update(i, self.mass(record.priority))
        self.cursor = (i + 1) % self.capacity
        self.count = min(self.count + 1, self.capacity)
        return evicted

    def set_priority(self, idx, priority):
        idx = np.atleast_1d(np.asarray(idx, dtype=np.int64))
        priority = np.broadcast_to(np.asarray(priority, dtype=np.float64), idx.shape)
        if np.any(priority < 0):
            raise ContractError("priority must be >= 0")
        if idx.size and (idx.min() < 0 or idx.max() >= self.count):
            raise IndexError("slot is not live")
        self.priority[idx] = priority
        self.tree.update(idx, self.mass(priority))

    def sample_indices(self, batch: int, rng: np.random.Generator) -> np.ndarray:
        """Independent draws with probability proportional to
        ``(priority + floor) ** exponent``."""
        if self.count == 0:
            raise ContractError("cannot sample from an empty replay")
        if batch < 1:
            raise ContractError("batch must be >= 1")
        total = self.tree.total
        u = rng.random(batch)
        if not total > 0.0:
            # every mass is zero (floor 0): fall back to uniform
            return np.minimum((u * self.count).astype(np.int64), self.count - 1)
        idx = self.tree.find(u * total)
        # guards the rounding edge where u * total lands past the last live leaf
        return np.minimum(idx, self.count - 1)

    def distribution(self) -> np.ndarray:
        if self.count == 0:
            raise ContractError("empty replay has no sampling distribution")
        m = self.mass(self.priority[:self.count])
        total = m.sum()
        if not total > 0.0:
            return np.full(self.count, 1.0 / self.count)
        return m / total

    def iterate_oldest_to_newest(self) -> np.ndarray:
        if self.count < self.capacity:
            return np.arange(self.count)
        return (np.arange(self.capacity) + self.cursor) % self.capacity

    def write_refreshed(self, q_pred, novelty, target, priority):
        """Replace all derived fields of the live slots (slot order) and
        rebuild the sampling tree."""
        n = self.count
        self.q_pred[:n] = q_pred
        self.novelty[:n] = novelty
        self.target[:n] = target
        self.priority[:n] = priority
        leaves = np.zeros(self.capacity)
        leaves[:n] = self.mass(priority)
        self.tree.set_all(leaves)

    def experience_checksum(self) -> str:
        h = hashlib.sha256()
        for i in self.iterate_oldest_to_newest():
            h.update(self.s[i].tobytes())
            h.update(struct.pack("<qd?", int(self.a[i]), float(self.r[i]), bool(self.terminal[i])))
            h.update(self.s_next[i].tobytes())
        return h.hexdigest()

    def derived_checksum(self) -> str:
        n = self.count
        h = hashlib.sha256()
        for arr in (self.q_pred, self.novelty, self.target, self.priority):
            h.update(arr[:n].tobytes())
        h.update(self.tree.tree.tobytes())
        return h.hexdigest()

    # --- snapshot file ---------------------------------------------------

    def record_dtype(self) -> np.dtype:
        return record_dtype(self.obs_dim)

    def dump(self) -> bytes:
        """Versioned binary snapshot, records oldest to newest.

        Header (little-endian): magic ``PARRRPL\\0`` | u32 version | u32 obs_dim |
        u64 capacity | u64 count | u64 cursor | u64 next_insertion |
        f64 priority_exponent | f64 priority_floor, then ``count`` packed
        records of :func:`record_dtype`.
        """
        order = self.iterate_oldest_to_newest()
        rec = np.zeros(len(order), dtype=self.record_dtype())
        rec["s"] = self.s[order]
        rec["a"] = self.a[order]
        rec["r"] = self.r[order]
        rec["s_next"] = self.s_next[order]
        rec["terminal"] = self.terminal[order]
        rec["q_pred"] = self.q_pred[order]
        rec["novelty"] = self.novelty[order]
        rec["target"] = self.target[order]
        rec["priority"] = self.priority[order]
        rec["insertion_index"] = self.insertion_index[order]
        head = REPLAY_MAGIC + struct.pack(REPLAY_HEADER, REPLAY_VERSION, self.obs_dim, self.capacity, self.count,
                                          self.cursor, self.next_insertion, self.priority_exponent,
                                          self.priority_floor)
        return head + rec.tobytes()

    @classmethod
    def load(cls, blob: bytes, sumtree_kernels=None) -> "ReplayBuffer":
        if blob[:8] != REPLAY_MAGIC:
            raise CheckpointError("bad replay magic")
        try:
            version, obs_dim, capacity, count, cursor, next_ins, expo, floor = struct.unpack_from(REPLAY_HEADER, blob, 8)
        except struct.error as exc:
            raise CheckpointError(f"truncated replay header: {exc}") from None
        if version != REPLAY_VERSION:
            raise CheckpointError(f"unsupported replay format version {version}")
        dt = record_dtype(obs_dim)
        off = 8 + struct.calcsize(REPLAY_HEADER)
        if len(blob) != off + count * dt.itemsize or count > capacity or cursor >= max(capacity, 1):
            raise CheckpointError("replay snapshot size does not match its header")
        rec = np.frombuffer(blob, dtype=dt, count=count, offset=off)
        buf = cls(capacity, obs_dim, expo, floor, sumtree_kernels)
        # put records back in the same slots they occupied
        start = (cursor - count) % capacity if count == capacity else 0
        slots = (start + np.arange(count)) % capacity
        buf.s[slots] = rec["s"]
        buf.a[slots] = rec["a"]
        buf.r[slots] = rec["r"]
        buf.s_next[slots] = rec["s_next"]
        buf.terminal[slots] = rec["terminal"]
        buf.q_pred[slots] = rec["q_pred"]
        buf.novelty[slots] = rec["novelty"]
        buf.target[slots] = rec["target"]
        buf.priority[slots] = rec["priority"]
        buf.insertion_index[slots] = rec["insertion_index"]
        buf.count, buf.cursor, buf.next_insertion = count, cursor, next_ins
        leaves = np.zeros(capacity)
        leaves[:count] = buf.mass(buf.priority[:count])
        buf.tree.set_all(leaves)
        return buf


REPLAY_MAGIC = b"PARRRPL\x00"
REPLAY_VERSION = 1
REPLAY_HEADER = "<IIQQQQdd"


def record_dtype(obs_dim: int) -> np.dtype:
    return np.dtype([
        ("s", "<f8", (obs_dim,)),
        ("a", "<i8"),
        ("r", "<f8"),
        ("s_next", "<f8", (obs_dim,)),
        ("terminal", "u1"),
        ("q_pred", "<f8"),
        ("novelty", "<f8"),
        ("target", "<f8"),
        ("priority", "<f8"),
        ("insertion_index", "<i8"),
    ])
