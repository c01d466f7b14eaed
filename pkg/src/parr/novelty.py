"""Random network distillation novelty, retrained from scratch over the
replay at every refresh.

Raw error is the mean squared difference between a fixed random network and
a trained predictor on the normalized state. Novelty is the raw error divided
by ``sigma``, the population standard deviation of raw errors over the
replay at the last refresh.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import time

import numpy as np

from .nn import (ContractError, NetSpec, OptimizerState, ParamSet, backward, forward, init_params,
                 optimizer_step, predict)


@dataclass
class StateNormStats:
    mean: np.ndarray
    std: np.ndarray
    count: int


@dataclass
class NoveltyConfig:
    outputs: int = 32
    fixed_hidden: tuple[int, ...] = (64,)
    predictor_hidden: tuple[int, ...] = (64, 64)
    activation_slope: float = 0.01
    epochs: int = 2
    batch_size: int = 64
    lr: float = 1e-3
    clip: float = 5.0
    std_floor: float = 1e-6
    sigma_floor: float = 1e-8


def _fit_stats(states: np.ndarray, std_floor: float) -> StateNormStats:
    mean = states.mean(axis=0)
    std = np.maximum(states.std(axis=0), std_floor)
    return StateNormStats(mean, std, len(states))


def fit_state_normalizer(states, std_floor: float = 1e-6) -> StateNormStats:
    """Per-feature mean and population std over exactly ``states``."""
    states = np.asarray(states, dtype=np.float64)
    if states.ndim != 2 or len(states) < 2:
        raise ContractError("need at least 2 states to fit the normalizer")
    return _fit_stats(states, std_floor)


def normalize_state(norm: StateNormStats, s, clip: float = 5.0) -> np.ndarray:
    s = np.asarray(s, dtype=np.float64)
    if s.shape[-1] != norm.mean.shape[0]:
        raise ContractError(f"state width {s.shape[-1]} != normalizer width {norm.mean.shape[0]}")
    return np.clip((s - norm.mean) / norm.std, -clip, clip)


@dataclass
class NoveltyPair:
    fixed_spec: NetSpec
    fixed_net: ParamSet
    predictor_spec: NetSpec
    predictor: ParamSet
    norm: StateNormStats
    sigma: float | None = None
    config: NoveltyConfig = field(default_factory=NoveltyConfig)

    @classmethod
    def create(cls, obs_dim: int, config: NoveltyConfig, seed: int) -> "NoveltyPair":
        c = config
        fixed_spec = NetSpec((obs_dim, *c.fixed_hidden, c.outputs), c.activation_slope)
        pred_spec = NetSpec((obs_dim, *c.predictor_hidden, c.outputs), c.activation_slope)
        norm = StateNormStats(np.zeros(obs_dim), np.ones(obs_dim), 0)
        return cls(fixed_spec, init_params(fixed_spec, seed), pred_spec, init_params(pred_spec, seed + 1),
                   norm, None, c)

    def normalized(self, s) -> np.ndarray:
        return normalize_state(self.norm, s, self.config.clip)


def raw_error(pair: NoveltyPair, s) -> np.ndarray | float:
    """Unnormalized error for one state (float) or a batch (array)."""
    x = pair.normalized(s)
    diff = predict(pair.fixed_net, pair.fixed_spec, x) - predict(pair.predictor, pair.predictor_spec, x)
    err = np.mean(diff * diff, axis=-1)
    return float(err) if np.ndim(err) == 0 else err


def novelty_for_new(pair: NoveltyPair, s) -> float:
    if pair.sigma is None:
        raise ContractError("novelty is undefined before the first refresh")
    return raw_error(pair, s) / pair.sigma


def train_predictor(pair: NoveltyPair, x: np.ndarray, epochs: int, seed: int) -> list[float]:
    """Re-initialize the predictor from ``seed`` and fit it to the fixed net on
    normalized inputs ``x``. Returns the per-minibatch losses."""
    c = pair.config
    pair.predictor = init_params(pair.predictor_spec, seed)
    opt = OptimizerState.for_params(pair.predictor, lr=c.lr)
    rng = np.random.default_rng(seed)
    targets = predict(pair.fixed_net, pair.fixed_spec, x)
    k = pair.fixed_spec.n_outputs
    losses = []
    for _ in range(epochs):
        perm = rng.permutation(len(x))
        for lo in range(0, len(x), c.batch_size):
            mb = perm[lo:lo + c.batch_size]
            out, cache = forward(pair.predictor, pair.predictor_spec, x[mb])
            diff = out - targets[mb]
            losses.append(float(np.mean(diff * diff)))
            grads = backward(pair.predictor, pair.predictor_spec, cache, diff * (2.0 / (len(mb) * k)))
            optimizer_step(pair.predictor, grads, opt)
    return losses


@dataclass
class NoveltyRefresh:
    novelty: np.ndarray      # per record, in the order the states were given
    raw_errors: np.ndarray
    sigma: float
    sigma_floored: bool
    timings: dict


def refresh_novelty(pair: NoveltyPair, states: np.ndarray, epochs: int | None = None,
                    seed: int = 0) -> NoveltyRefresh:
    """Refit normalization, retrain the predictor from scratch, recompute
    sigma and every record's novelty. Mutates ``pair``.

    ``states`` is an array of next-states, or a replay buffer (its ``s_next``
    oldest to newest is used, and results come back in that order).
    """
    c = pair.config
    epochs = c.epochs if epochs is None else epochs
    if hasattr(states, "iterate_oldest_to_newest"):
        states = states.s_next[states.iterate_oldest_to_newest()]
    states = np.asarray(states, dtype=np.float64)
    if len(states) == 0:
        raise ContractError("cannot refresh novelty over an empty replay")
    if epochs < 1:
        raise ContractError("epochs must be >= 1")
    timings = {}
    t0 = time.perf_counter()
    pair.norm = _fit_stats(states, c.std_floor)
    x = pair.normalized(states)
    t1 = time.perf_counter()
    train_predictor(pair, x, epochs, seed)
    t2 = time.perf_counter()
    diff = predict(pair.fixed_net, pair.fixed_spec, x) - predict(pair.predictor, pair.predictor_spec, x)
    errors = np.mean(diff * diff, axis=1)
    sigma = float(np.std(errors))
    floored = sigma < c.sigma_floor
    pair.sigma = c.sigma_floor if floored else sigma
    novelty = errors / pair.sigma
    t3 = time.perf_counter()
    timings["normalizer_fit"] = t1 - t0
    timings["predictor_train"] = t2 - t1
    timings["novelty_errors"] = t3 - t2
    return NoveltyRefresh(novelty, errors, pair.sigma, floored, timings)
