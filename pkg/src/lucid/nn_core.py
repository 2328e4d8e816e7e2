"""Dense ReLU/softmax classifier numerics.

Everything here works on float64 numpy arrays.  The model is immutable; the
training loop gets a new :class:`MlpModel` back from :func:`apply_param_step`.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

MODEL_FORMAT_VERSION = 1
LOG_CLAMP = 1e-12


class DimensionError(ValueError):
    """Raised when an array does not fit the model's layer layout."""

    def __init__(self, what: str, expected, actual):
        self.what = what
        self.expected = expected
        self.actual = actual
        super().__init__(f"{what}: expected {expected}, got {actual}")


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class MlpModel:
    """Fully connected network: ReLU hidden layers, 2-way softmax output.

    ``weights[k]`` has shape ``(layer_dims[k+1], layer_dims[k])``.
    """

    layer_dims: tuple[int, ...]
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        if len(dims) < 2 or any(d < 1 for d in dims):
            raise ValueError(f"layer_dims must hold >= 2 positive ints, got {dims}")
        if dims[-1] != 2:
            raise ValueError(f"output dimension must be 2, got {dims[-1]}")
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise DimensionError("number of layers", len(dims) - 1,
                                 (len(self.weights), len(self.biases)))
        ws = tuple(_frozen(w) for w in self.weights)
        bs = tuple(_frozen(b) for b in self.biases)
        for k, (w, b) in enumerate(zip(ws, bs)):
            if w.shape != (dims[k + 1], dims[k]):
                raise DimensionError(f"weights[{k}] shape", (dims[k + 1], dims[k]), w.shape)
            if b.shape != (dims[k + 1],):
                raise DimensionError(f"biases[{k}] shape", (dims[k + 1],), b.shape)
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise ValueError(f"layer {k} has non-finite parameters")
        object.__setattr__(self, "layer_dims", dims)
        object.__setattr__(self, "weights", ws)
        object.__setattr__(self, "biases", bs)

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def to_dict(self) -> dict:
        return {
            "version": MODEL_FORMAT_VERSION,
            "layer_dims": list(self.layer_dims),
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlpModel":
        if d.get("version") != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported model format version {d.get('version')!r}")
        return cls(tuple(d["layer_dims"]),
                   tuple(np.array(w, dtype=np.float64).reshape(len(w), -1) for w in d["weights"]),
                   tuple(np.array(b, dtype=np.float64) for b in d["biases"]))

    def to_json(self) -> str:
        # repr-based float encoding is shortest round-trip, so this is bit-exact
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "MlpModel":
        return cls.from_dict(json.loads(text))

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(np.asarray(self.layer_dims, dtype=np.int64).tobytes())
        for w, b in zip(self.weights, self.biases):
            h.update(np.ascontiguousarray(w).tobytes())
            h.update(np.ascontiguousarray(b).tobytes())
        return h.hexdigest()


@dataclass
class GradientBundle:
    wrt_weights: list[np.ndarray]
    wrt_biases: list[np.ndarray]
    wrt_input: np.ndarray
    loss_value: float
    prediction: np.ndarray = field(repr=False, default=None)


def init_model(layer_dims: Sequence[int], seed: int) -> MlpModel:
    """Glorot-uniform weights, zero biases, reproducible under ``seed``."""
    rng = np.random.default_rng(seed)
    ws, bs = [], []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        ws.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        bs.append(np.zeros(fan_out))
    return MlpModel(tuple(layer_dims), tuple(ws), tuple(bs))


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _check_input(model: MlpModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.input_dim:
        raise DimensionError("input length", model.input_dim, x.shape[-1])
    return x


def _forward_cache(model: MlpModel, X: np.ndarray):
    """Batched forward pass keeping the pre-activations for backprop."""
    acts = [X]
    pre = []
    a = X
    last = model.n_layers - 1
    for k, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ w.T + b
        pre.append(z)
        a = softmax(z) if k == last else np.maximum(z, 0.0)
        acts.append(a)
    return acts, pre


def forward(model: MlpModel, x) -> np.ndarray:
    """Class probabilities for one vector (shape ``(M,)``) or a batch (``(N, M)``)."""
    x = _check_input(model, x)
    acts, _ = _forward_cache(model, np.atleast_2d(x))
    p = acts[-1]
    return p[0] if x.ndim == 1 else p


def _check_target(target) -> np.ndarray:
    t = np.asarray(target, dtype=np.float64)
    ok = (t.shape[-1] == 2 and np.all((t == 0.0) | (t == 1.0))
          and np.all(t.sum(axis=-1) == 1.0))
    if not ok:
        raise ValueError(f"target must be one-hot of length 2, got {t.tolist()}")
    return t


def cross_entropy(prediction, target) -> float:
    t = _check_target(target)
    p = np.clip(np.asarray(prediction, dtype=np.float64), LOG_CLAMP, 1.0)
    return float(-(t * np.log(p)).sum())


def _backward_batch(model: MlpModel, X: np.ndarray, T: np.ndarray):
    """Gradients of the mean cross-entropy over the rows of ``X``."""
    acts, pre = _forward_cache(model, X)
    n = X.shape[0]
    p = acts[-1]
    losses = -(T * np.log(np.clip(p, LOG_CLAMP, 1.0))).sum(axis=1)
    # softmax + cross-entropy: dL/dz = p - t (clamp only affects p < 1e-12)
    delta = (p - T) / n
    gw = [None] * model.n_layers
    gb = [None] * model.n_layers
    for k in range(model.n_layers - 1, -1, -1):
        gw[k] = delta.T @ acts[k]
        gb[k] = delta.sum(axis=0)
        delta = delta @ model.weights[k]
        if k > 0:
            delta = delta * (pre[k - 1] > 0.0)
    # delta is now dL/dX scaled for the mean loss
    return gw, gb, delta, losses, p


def backward(model: MlpModel, x, target) -> GradientBundle:
    """Loss and exact gradients for a single sample."""
    x = _check_input(model, x)
    if x.ndim != 1:
        raise DimensionError("input rank", 1, x.ndim)
    t = _check_target(target)
    gw, gb, gx, losses, p = _backward_batch(model, x[None, :], t[None, :])
    return GradientBundle(gw, gb, gx[0], float(losses[0]), p[0])


def batch_gradients(model: MlpModel, X, T):
    """Mean loss and parameter gradients of the mean loss over a mini-batch."""
    X = _check_input(model, X)
    T = _check_target(T)
    gw, gb, _, losses, _ = _backward_batch(model, np.atleast_2d(X), np.atleast_2d(T))
    return float(losses.mean()), gw, gb


def apply_param_step(model: MlpModel, wrt_weights, wrt_biases, learning_rate: float) -> MlpModel:
    if len(wrt_weights) != model.n_layers or len(wrt_biases) != model.n_layers:
        raise DimensionError("gradient layer count", model.n_layers,
                             (len(wrt_weights), len(wrt_biases)))
    ws, bs = [], []
    for k, (w, b, gw, gb) in enumerate(zip(model.weights, model.biases, wrt_weights, wrt_biases)):
        gw = np.asarray(gw, dtype=np.float64)
        gb = np.asarray(gb, dtype=np.float64)
        if gw.shape != w.shape:
            raise DimensionError(f"weight gradient {k} shape", w.shape, gw.shape)
        if gb.shape != b.shape:
            raise DimensionError(f"bias gradient {k} shape", b.shape, gb.shape)
        ws.append(w - learning_rate * gw)
        bs.append(b - learning_rate * gb)
    return MlpModel(model.layer_dims, tuple(ws), tuple(bs))
