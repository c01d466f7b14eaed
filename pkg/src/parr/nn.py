"""Dense feed-forward networks in float64 numpy.

Weights are stored as ``(fan_out, fan_in)`` matrices, so a batch ``X`` of
shape ``(n, fan_in)`` maps to ``X @ W.T + b``. Hidden layers use a leaky
rectifier; the last layer is linear unless ``final_layer_linear`` is off.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field

import numpy as np


class ContractError(ValueError):
    """An operation was called with arguments that violate its contract."""


class NumericalFault(ArithmeticError):
    """A non-finite value reached a place where it must not."""


@dataclass(frozen=True)
class NetSpec:
    layer_sizes: tuple[int, ...]
    activation_slope: float = 0.01
    final_layer_linear: bool = True

    def __post_init__(self):
        sizes = tuple(int(n) for n in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 2:
            raise ContractError(f"need at least 2 layer sizes, got {sizes}")
        if any(n < 1 for n in sizes):
            raise ContractError(f"layer sizes must be >= 1, got {sizes}")
        if not 0.0 < self.activation_slope < 1.0:
            raise ContractError(f"activation slope must be in (0, 1), got {self.activation_slope}")

    @property
    def n_layers(self) -> int:
        return len(self.layer_sizes) - 1

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_outputs(self) -> int:
        return self.layer_sizes[-1]

    def shapes(self) -> list[tuple[int, int]]:
        return [(self.layer_sizes[i + 1], self.layer_sizes[i]) for i in range(self.n_layers)]

    def n_params(self) -> int:
        return sum(o * i + o for o, i in self.shapes())


@dataclass
class ParamSet:
    """Per-layer weights and biases. Also used to hold gradients."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def copy(self) -> "ParamSet":
        return ParamSet([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def zeros_like(self) -> "ParamSet":
        return ParamSet([np.zeros_like(w) for w in self.weights], [np.zeros_like(b) for b in self.biases])

    def arrays(self) -> list[np.ndarray]:
        """Arrays in serialization order: W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def checksum(self) -> str:
        h = hashlib.sha256()
        for a in self.arrays():
            h.update(np.ascontiguousarray(a, dtype="<f8").tobytes())
        return h.hexdigest()

    def all_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in self.arrays())

    def max_abs_diff(self, other: "ParamSet") -> float:
        return max(float(np.max(np.abs(a - b))) for a, b in zip(self.arrays(), other.arrays()))

    def check_shapes(self, spec: NetSpec):
        if len(self.weights) != spec.n_layers or len(self.biases) != spec.n_layers:
            raise ContractError("parameter layer count does not match spec")
        for (o, i), w, b in zip(spec.shapes(), self.weights, self.biases):
            if w.shape != (o, i) or b.shape != (o,):
                raise ContractError(f"expected W{(o, i)} b({o},), got W{w.shape} b{b.shape}")


# Gradients share the parameter container.
GradSet = ParamSet


def leaky_relu(x: np.ndarray, slope: float) -> np.ndarray:
    # valid because 0 < slope < 1
    return np.maximum(x, slope * x)


def init_params(spec: NetSpec, seed: int) -> ParamSet:
    """Uniform(+-sqrt(6 / fan_in)) weights and zero biases."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_out, fan_in in spec.shapes():
        bound = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return ParamSet(weights, biases)


@dataclass
class ForwardCache:
    inputs: list[np.ndarray]  # input to each layer (2-D)
    pre: list[np.ndarray]     # pre-activation of each layer (2-D)
    single: bool


def forward(params: ParamSet, spec: NetSpec, x: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    """Evaluate the network on one input vector or a batch of row vectors."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    h = x[None, :] if single else x
    if h.ndim != 2 or h.shape[1] != spec.n_inputs:
        raise ContractError(f"input width {x.shape[-1] if x.ndim else None} != {spec.n_inputs}")
    inputs, pre = [], []
    last = spec.n_layers - 1
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(h)
        z = h @ w.T + b
        pre.append(z)
        if k == last and spec.final_layer_linear:
            h = z
        else:
            h = leaky_relu(z, spec.activation_slope)
    out = h[0] if single else h
    return out, ForwardCache(inputs, pre, single)


def predict(params: ParamSet, spec: NetSpec, x: np.ndarray) -> np.ndarray:
    """Forward pass without keeping the cache."""
    h = np.asarray(x, dtype=np.float64)
    if h.shape[-1] != spec.n_inputs:
        raise ContractError(f"input width {h.shape[-1]} != {spec.n_inputs}")
    last = spec.n_layers - 1
    slope = spec.activation_slope
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w.T + b
        if k != last or not spec.final_layer_linear:
            h = np.maximum(h, slope * h)
    return h


def backward(params: ParamSet, spec: NetSpec, cache: ForwardCache, output_grad: np.ndarray) -> GradSet:
    """Gradient of a scalar loss given dLoss/dOutput, summed over the batch."""
    g = np.asarray(output_grad, dtype=np.float64)
    if cache.single:
        g = g[None, :]
    if len(cache.pre) != spec.n_layers or g.shape != cache.pre[-1].shape:
        raise ContractError("cache/output_grad do not match this network")
    slope = spec.activation_slope
    dws = [None] * spec.n_layers
    dbs = [None] * spec.n_layers
    for k in range(spec.n_layers - 1, -1, -1):
        z = cache.pre[k]
        if k < spec.n_layers - 1 or not spec.final_layer_linear:
            g = np.where(z >= 0.0, g, slope * g)
        dws[k] = g.T @ cache.inputs[k]
        dbs[k] = g.sum(axis=0)
        if k > 0:
            g = g @ params.weights[k]
    return ParamSet(dws, dbs)


@dataclass
class OptimizerState:
    """Adam moments for one ParamSet."""

    m: ParamSet
    v: ParamSet
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: ParamSet, lr: float = 1e-3, beta1: float = 0.9,
                   beta2: float = 0.999, eps: float = 1e-8) -> "OptimizerState":
        return cls(params.zeros_like(), params.zeros_like(), 0, lr, beta1, beta2, eps)

    def copy(self) -> "OptimizerState":
        return OptimizerState(self.m.copy(), self.v.copy(), self.step, self.lr, self.beta1, self.beta2, self.eps)


def optimizer_step(params: ParamSet, grads: GradSet, state: OptimizerState) -> tuple[ParamSet, OptimizerState]:
    """One Adam update, applied to ``params`` and ``state`` in place."""
    if not grads.all_finite():
        raise NumericalFault("non-finite gradient; optimizer step refused")
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for p, g, m, v in zip(params.arrays(), grads.arrays(), state.m.arrays(), state.v.arrays()):
        if p.shape != g.shape:
            raise ContractError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


def gradient_check(spec: NetSpec, seed: int, tolerance: float = 1e-4, h: float = 1e-5) -> float:
    """Max relative error between backward() and central differences.

    The loss is ``dot(c, net(x))`` for a random input ``x`` and random
    coefficients ``c``, so ``c`` is the output gradient.
    """
    if tolerance <= 0:
        raise ContractError("tolerance must be positive")
    rng = np.random.default_rng(seed)
    params = init_params(spec, seed)
    # non-zero biases so the check also exercises them
    for b in params.biases:
        b[:] = rng.normal(scale=0.1, size=b.shape)
    x = rng.normal(size=spec.n_inputs)
    c = rng.normal(size=spec.n_outputs)

    def loss() -> float:
        return float(c @ predict(params, spec, x))

    _, cache = forward(params, spec, x)
    analytic = backward(params, spec, cache, c)
    worst = 0.0
    for p, g in zip(params.arrays(), analytic.arrays()):
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + h
            up = loss()
            p[idx] = orig - h
            down = loss()
            p[idx] = orig
            numeric = (up - down) / (2.0 * h)
            denom = max(abs(numeric), abs(g[idx]), 1e-7)
            worst = max(worst, abs(numeric - g[idx]) / denom)
    return worst


# --- flat checkpoint format --------------------------------------------------

NET_MAGIC = b"PARRNET\x00"
NET_VERSION = 1


class CheckpointError(ValueError):
    """A serialized blob failed magic, version, or shape validation."""


def dump_params(params: ParamSet, spec: NetSpec) -> bytes:
    """Serialize to the versioned flat layout.

    magic(8) | u32 version | u32 n_sizes | u32 sizes... | f64 slope |
    u8 final_linear | per layer: W row-major f64 LE, then b f64 LE
    """
    params.check_shapes(spec)
    sizes = spec.layer_sizes
    head = NET_MAGIC + struct.pack(f"<II{len(sizes)}IdB", NET_VERSION, len(sizes), *sizes,
                                   spec.activation_slope, int(spec.final_layer_linear))
    body = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in params.arrays())
    return head + body


def load_params(blob: bytes) -> tuple[ParamSet, NetSpec]:
    if blob[:8] != NET_MAGIC:
        raise CheckpointError("bad network magic")
    try:
        version, n_sizes = struct.unpack_from("<II", blob, 8)
        if version != NET_VERSION:
            raise CheckpointError(f"unsupported network format version {version}")
        off = 16
        sizes = struct.unpack_from(f"<{n_sizes}I", blob, off)
        off += 4 * n_sizes
        slope, final_linear = struct.unpack_from("<dB", blob, off)
        off += 9
    except struct.error as exc:
        raise CheckpointError(f"truncated network header: {exc}") from None
    try:
        spec = NetSpec(tuple(sizes), slope, bool(final_linear))
    except ContractError as exc:
        raise CheckpointError(f"invalid network spec in checkpoint: {exc}") from None
    expected = off + 8 * spec.n_params()
    if len(blob) != expected:
        raise CheckpointError(f"network blob has {len(blob)} bytes, expected {expected}")
    values = np.frombuffer(blob, dtype="<f8", offset=off).astype(np.float64)
    weights, biases, pos = [], [], 0
    for o, i in spec.shapes():
        weights.append(values[pos:pos + o * i].reshape(o, i).copy())
        pos += o * i
        biases.append(values[pos:pos + o].copy())
        pos += o
    return ParamSet(weights, biases), spec


OPT_MAGIC = b"PARROPT\x00"


def dump_optimizer(state: OptimizerState, spec: NetSpec) -> bytes:
    head = OPT_MAGIC + struct.pack("<Iqdddd", NET_VERSION, state.step, state.lr, state.beta1, state.beta2, state.eps)
    return head + dump_params(state.m, spec) + dump_params(state.v, spec)


def load_optimizer(blob: bytes) -> OptimizerState:
    if blob[:8] != OPT_MAGIC:
        raise CheckpointError("bad optimizer magic")
    try:
        version, step, lr, b1, b2, eps = struct.unpack_from("<Iqdddd", blob, 8)
    except struct.error as exc:
        raise CheckpointError(f"truncated optimizer header: {exc}") from None
    if version != NET_VERSION:
        raise CheckpointError(f"unsupported optimizer format version {version}")
    rest = blob[8 + struct.calcsize("<Iqdddd"):]
    if len(rest) % 2:
        raise CheckpointError("optimizer moment blobs are corrupt")
    half = len(rest) // 2
    m, spec_m = load_params(rest[:half])
    v, spec_v = load_params(rest[half:])
    if spec_m != spec_v:
        raise CheckpointError("optimizer moment shapes disagree")
    return OptimizerState(m, v, step, lr, b1, b2, eps)
