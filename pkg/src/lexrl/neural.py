"""Small dense ReLU networks used as critics, written directly on numpy.

Weights are stored as ``(fan_out, fan_in)`` matrices, so a batch of inputs
``X`` of shape ``(n, fan_in)`` maps to ``X @ W.T + b``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

MAGIC = b"LEXMLP\x00\x01"
FORMAT_VERSION = 1


class WeightFileError(ValueError):
    """Base class for weight-file problems."""


class WeightFormatError(WeightFileError):
    """Bad magic bytes, truncated payload or otherwise corrupt header."""


class WeightVersionError(WeightFileError):
    """The file was written with an unsupported format version."""


class WeightShapeError(WeightFileError):
    """Layer headers do not chain into a valid dense network."""


@dataclass(frozen=True)
class NetworkArchitecture:
    input_dim: int
    hidden_sizes: tuple[int, ...]
    output_dim: int
    hidden_activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if self.hidden_activation != "relu":
            raise ValueError(f"unsupported activation {self.hidden_activation!r}")
        if min(self.layer_sizes) < 1:
            raise ValueError(f"zero-sized layer in {self.layer_sizes}")

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden_sizes, self.output_dim)

    @property
    def shapes(self) -> list[tuple[int, int]]:
        sizes = self.layer_sizes
        return [(sizes[i + 1], sizes[i]) for i in range(len(sizes) - 1)]


@dataclass(frozen=True)
class MlpParameters:
    """Weights and biases of one critic. Treated as an immutable value."""

    arch: NetworkArchitecture
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self):
        shapes = self.arch.shapes
        if len(self.weights) != len(shapes) or len(self.biases) != len(shapes):
            raise WeightShapeError("layer count does not match architecture")
        for w, b, (rows, cols) in zip(self.weights, self.biases, shapes):
            if w.shape != (rows, cols) or b.shape != (rows,):
                raise WeightShapeError(
                    f"expected ({rows}, {cols}) weights, got {w.shape} / bias {b.shape}"
                )

    @property
    def arrays(self) -> list[np.ndarray]:
        """Flat list ``[W0, b0, W1, b1, ...]``."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    @classmethod
    def from_arrays(cls, arch: NetworkArchitecture, arrays: Sequence[np.ndarray]) -> "MlpParameters":
        arrays = [np.asarray(a, dtype=np.float64) for a in arrays]
        return cls(arch, tuple(arrays[0::2]), tuple(arrays[1::2]))

    def map(self, fn, *others: "MlpParameters") -> "MlpParameters":
        """Apply ``fn`` elementwise across matching arrays of ``self`` and ``others``."""
        for o in others:
            if o.arch != self.arch:
                raise ValueError(f"architecture mismatch: {self.arch} vs {o.arch}")
        cols = zip(self.arrays, *(o.arrays for o in others))
        return MlpParameters.from_arrays(self.arch, [fn(*c) for c in cols])

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays)

    def equals(self, other: "MlpParameters") -> bool:
        """Bitwise equality of every array."""
        return self.arch == other.arch and all(
            a.tobytes() == b.tobytes() for a, b in zip(self.arrays, other.arrays)
        )


def init_weights(arch: NetworkArchitecture, seed) -> MlpParameters:
    """Uniform fan-in init, ``|w| <= sqrt(6 / fan_in)``, zero biases."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for rows, cols in arch.shapes:
        bound = np.sqrt(6.0 / cols)
        weights.append(rng.uniform(-bound, bound, size=(rows, cols)))
        biases.append(np.zeros(rows))
    return MlpParameters(arch, tuple(weights), tuple(biases))


def _as_batch(params: MlpParameters, features) -> tuple[np.ndarray, bool]:
    x = np.asarray(features, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != params.arch.input_dim:
        raise ValueError(
            f"expected features of width {params.arch.input_dim}, got shape {np.shape(features)}"
        )
    return x, single


def _forward_cache(params: MlpParameters, x: np.ndarray):
    activations = [x]
    pre = []
    h = x
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w.T + b
        pre.append(z)
        h = z if i == last else np.maximum(z, 0.0)
        activations.append(h)
    return activations, pre


def forward(params: MlpParameters, features) -> np.ndarray:
    """Q-values, one per action. Accepts a single feature vector or a batch."""
    x, single = _as_batch(params, features)
    out = _forward_cache(params, x)[0][-1]
    return out[0] if single else out


def _taken(q: np.ndarray, actions: np.ndarray) -> np.ndarray:
    return q[np.arange(q.shape[0]), actions]


def _check_batch(features, actions, targets):
    actions = np.asarray(actions, dtype=np.intp)
    targets = np.asarray(targets, dtype=np.float64)
    if actions.size == 0:
        raise ValueError("empty minibatch")
    if np.ndim(features) != 2 or len(features) != actions.size or targets.shape != actions.shape:
        raise ValueError("features, actions and targets must share the batch dimension")
    return actions, targets


def batch_loss(params: MlpParameters, features, actions, targets) -> float:
    """Mean squared error between targets and the Q-value of the taken action."""
    actions, targets = _check_batch(features, actions, targets)
    q = forward(params, np.asarray(features, dtype=np.float64))
    return float(np.mean((targets - _taken(q, actions)) ** 2))


def gradient(params: MlpParameters, features, actions, targets) -> MlpParameters:
    """Exact gradient of :func:`batch_loss`. ReLU'(0) is taken as 0."""
    actions, targets = _check_batch(features, actions, targets)
    x, _ = _as_batch(params, features)
    activations, pre = _forward_cache(params, x)
    n = x.shape[0]
    rows = np.arange(n)
    delta = np.zeros_like(activations[-1])
    delta[rows, actions] = 2.0 * (activations[-1][rows, actions] - targets) / n

    grads_w = [None] * len(params.weights)
    grads_b = [None] * len(params.weights)
    for i in range(len(params.weights) - 1, -1, -1):
        grads_w[i] = delta.T @ activations[i]
        grads_b[i] = delta.sum(axis=0)
        if i:
            delta = (delta @ params.weights[i]) * (pre[i - 1] > 0.0)
    return MlpParameters(params.arch, tuple(grads_w), tuple(grads_b))


def sgd_step(params: MlpParameters, grad: MlpParameters, lr: float) -> MlpParameters:
    if not lr > 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    if not grad.is_finite():
        raise FloatingPointError("non-finite gradient")
    return params.map(lambda p, g: p - lr * g, grad)


@dataclass
class AdamState:
    """Moment estimates for :func:`adam_step`."""

    m: MlpParameters
    v: MlpParameters
    t: int = 0

    @classmethod
    def zeros_like(cls, params: MlpParameters) -> "AdamState":
        z = params.map(np.zeros_like)
        return cls(z, z)


def adam_step(
    params: MlpParameters,
    grad: MlpParameters,
    lr: float,
    state: AdamState,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[MlpParameters, AdamState]:
    if not lr > 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    if not grad.is_finite():
        raise FloatingPointError("non-finite gradient")
    t = state.t + 1
    m = state.m.map(lambda m, g: beta1 * m + (1 - beta1) * g, grad)
    v = state.v.map(lambda v, g: beta2 * v + (1 - beta2) * g * g, grad)
    c1, c2 = 1 - beta1**t, 1 - beta2**t
    new = params.map(lambda p, m, v: p - lr * (m / c1) / (np.sqrt(v / c2) + eps), m, v)
    return new, AdamState(m, v, t)


def soft_update(target: MlpParameters, online: MlpParameters, tau: float) -> MlpParameters:
    """Polyak averaging: ``tau * online + (1 - tau) * target``."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    return target.map(lambda t, o: tau * o + (1.0 - tau) * t, online)


@dataclass(frozen=True)
class ScheduleConfig:
    base_lr: float = 1e-4
    base_epsilon: float = 0.5
    decay_rate: float = 0.99
    decay_onset: int = 500
    schedule_unit: str = "episode"

    def __post_init__(self):
        if not 0.0 < self.decay_rate <= 1.0:
            raise ValueError(f"decay_rate must lie in (0, 1], got {self.decay_rate}")
        if self.base_lr <= 0 or self.base_epsilon <= 0:
            raise ValueError("base learning rate and epsilon must be positive")
        if self.schedule_unit not in ("episode", "step"):
            raise ValueError(f"schedule_unit must be 'episode' or 'step', got {self.schedule_unit!r}")


def schedule_value(cfg: ScheduleConfig, kind: str, t: int) -> float:
    """``base * decay_rate ** (max(1, t - decay_onset) - 1)`` for ``t >= 1``."""
    if t < 1:
        raise ValueError(f"schedule index starts at 1, got {t}")
    base = {"lr": cfg.base_lr, "epsilon": cfg.base_epsilon}[kind]
    return base * cfg.decay_rate ** (max(1, t - cfg.decay_onset) - 1)


# weight files: MAGIC | u32 version | u32 layers | (u32 rows, u32 cols) * layers
# | per layer: W row-major then b, float64 little-endian
_U32 = struct.Struct("<I")


def to_bytes(params: MlpParameters) -> bytes:
    parts = [MAGIC, _U32.pack(FORMAT_VERSION), _U32.pack(len(params.weights))]
    for w in params.weights:
        parts.append(struct.pack("<II", *w.shape))
    for w, b in zip(params.weights, params.biases):
        parts.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    return b"".join(parts)


def from_bytes(data: bytes) -> MlpParameters:
    if len(data) < len(MAGIC) or data[: len(MAGIC)] != MAGIC:
        raise WeightFormatError("not a weight file (bad magic bytes)")
    pos = len(MAGIC)

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(data):
            raise WeightFormatError("truncated weight file")
        chunk = data[pos : pos + n]
        pos += n
        return chunk

    (version,) = _U32.unpack(take(4))
    if version != FORMAT_VERSION:
        raise WeightVersionError(f"unsupported weight format version {version}")
    (n_layers,) = _U32.unpack(take(4))
    if n_layers < 1:
        raise WeightShapeError("weight file declares no layers")
    shapes = [struct.unpack("<II", take(8)) for _ in range(n_layers)]
    for (rows, _), (_, cols) in zip(shapes, shapes[1:]):
        if rows != cols:
            raise WeightShapeError(f"layer shapes do not chain: {shapes}")
    if any(r == 0 or c == 0 for r, c in shapes):
        raise WeightShapeError(f"zero-sized layer: {shapes}")
    arrays = []
    for rows, cols in shapes:
        arrays.append(np.frombuffer(take(8 * rows * cols), dtype="<f8").reshape(rows, cols).astype(np.float64))
        arrays.append(np.frombuffer(take(8 * rows), dtype="<f8").astype(np.float64))
    if pos != len(data):
        raise WeightFormatError(f"{len(data) - pos} trailing bytes after payload")
    arch = NetworkArchitecture(shapes[0][1], tuple(r for r, _ in shapes[:-1]), shapes[-1][0])
    return MlpParameters.from_arrays(arch, arrays)


def save(params: MlpParameters, path) -> None:
    Path(path).write_bytes(to_bytes(params))


def load(path) -> MlpParameters:
    return from_bytes(Path(path).read_bytes())
