"""Canonical sets: gradient descent on the input layer of a frozen classifier.

Each of the ``N`` canonical inputs starts as a uniform draw on ``[0, 1)^M``
(its own RNG stream keyed by ``(seed, row)``), takes ``E`` plain gradient
steps on the cross-entropy towards the preferred output with the model
weights held fixed, and is projected onto valid one-hot groups only at the
end.  Numeric slots are never clamped.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .data_pipeline import FeatureSchema
from .kernels import NonFiniteGradient
from .nn_core import MlpModel, backward, forward

log = logging.getLogger(__name__)

POSITIVE_OUTPUT = (0.0, 1.0)


@dataclass(frozen=True)
class InverseDesignConfig:
    seed: int
    num_inputs: int = 1000
    epochs: int = 200
    learning_rate: float = 0.1
    preferred_output: tuple[float, float] = POSITIVE_OUTPUT
    record_trajectory: bool = False
    format_initial: bool = False

    def __post_init__(self):
        if self.num_inputs < 1:
            raise ValueError(f"num_inputs must be >= 1, got {self.num_inputs}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if not 0.0 < self.learning_rate <= 10.0:
            raise ValueError(f"learning_rate must lie in (0, 10], got {self.learning_rate}")
        y = tuple(float(v) for v in self.preferred_output)
        if sorted(y) != [0.0, 1.0]:
            raise ValueError(f"preferred_output must be one-hot of length 2, got {y}")
        object.__setattr__(self, "preferred_output", y)

    @property
    def target_index(self) -> int:
        return int(np.argmax(self.preferred_output))

    @classmethod
    def from_dict(cls, d: dict) -> "InverseDesignConfig":
        if "seed" not in d:
            raise ValueError("inverse-design config requires an explicit 'seed'")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["preferred_output"] = list(self.preferred_output)
        return d


@dataclass
class CanonicalSet:
    initial: np.ndarray
    optimized: np.ndarray
    formatted: np.ndarray
    predictions_initial: np.ndarray
    predictions_optimized: np.ndarray
    predictions_formatted: np.ndarray
    config: InverseDesignConfig
    model_fingerprint: str
    backend: str = kernels.BACKEND
    # mean loss before each step and after the last one (length E + 1)
    trajectory: np.ndarray | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.initial.shape[0]

    def stage(self, name: str) -> np.ndarray:
        return {"initial": self.initial, "optimized": self.optimized,
                "formatted": self.formatted}[name]

    def predictions(self, name: str) -> np.ndarray:
        return {"initial": self.predictions_initial, "optimized": self.predictions_optimized,
                "formatted": self.predictions_formatted}[name]

    def summary(self) -> dict:
        """Per-stage statistics of the preferred-class probability."""
        k = self.config.target_index
        out = {}
        for name in ("initial", "optimized", "formatted"):
            p = self.predictions(name)[:, k]
            out[name] = {"mean": float(p.mean()), "min": float(p.min()),
                         "max": float(p.max()), "std": float(p.std()),
                         "fraction_preferred": float((p > 0.5).mean())}
        return out


def sample_uniform_inputs(schema: FeatureSchema | int, n: int, seed: int) -> np.ndarray:
    """``n`` rows of i.i.d. U[0, 1) draws; row ``i`` depends only on ``(seed, i)``."""
    if n < 1:
        raise ValueError(f"need at least one input, got {n}")
    m = schema if isinstance(schema, int) else schema.encoded_dim
    X = np.empty((n, m))
    for i in range(n):
        X[i] = np.random.default_rng([seed, i]).random(m)
    return X


def format_categorical(schema: FeatureSchema, x: np.ndarray) -> np.ndarray:
    """Set the largest slot of every one-hot group to 1 and the rest to 0.

    Works on a single vector or on rows of a matrix; ties go to the lowest
    index.  Numeric slots are copied unchanged.
    """
    x = np.array(x, dtype=np.float64, copy=True)
    X = np.atleast_2d(x)
    rows = np.arange(X.shape[0])
    for g in schema.categorical_groups():
        winner = np.argmax(X[:, g], axis=1)
        X[:, g] = 0.0
        X[rows, g.start + winner] = 1.0
    return X[0] if x.ndim == 1 else X


def inverse_design_step(model: MlpModel, x: np.ndarray, config: InverseDesignConfig,
                        learning_rate: float | None = None) -> np.ndarray:
    """One gradient step on the input only (reference path, single vector).

    ``learning_rate`` overrides ``config.learning_rate`` when given.
    """
    lr = config.learning_rate if learning_rate is None else learning_rate
    g = backward(model, x, config.preferred_output).wrt_input
    bad = np.flatnonzero(~np.isfinite(g))
    if bad.size:
        raise NonFiniteGradient(-1, -1, int(bad[0]))
    return np.asarray(x, dtype=np.float64) - lr * g


def mean_loss(model: MlpModel, X: np.ndarray, target_index: int) -> float:
    p = forward(model, X)[:, target_index]
    return float(-np.log(np.clip(p, 1e-12, 1.0)).mean())


def generate_canonical_set(model: MlpModel, schema: FeatureSchema, config: InverseDesignConfig,
                           backend: str | None = None, workers: int = 1) -> CanonicalSet:
    if model.input_dim != schema.encoded_dim:
        raise ValueError(f"model expects {model.input_dim} inputs but the schema "
                         f"encodes {schema.encoded_dim}")
    fingerprint = model.fingerprint()
    initial = sample_uniform_inputs(schema, config.num_inputs, config.seed)
    if config.format_initial:
        initial = format_categorical(schema, initial)
    optimized = np.ascontiguousarray(initial.copy())
    k = config.target_index
    losses = np.empty((config.epochs, config.num_inputs)) if config.record_trajectory else None
    kernels.descend_rows(model, optimized, k, config.learning_rate, config.epochs,
                         losses, backend=backend, workers=workers)
    formatted = format_categorical(schema, optimized)

    if model.fingerprint() != fingerprint:
        raise RuntimeError("model parameters changed during inverse design")
    trajectory = None
    if losses is not None:
        trajectory = np.append(losses.mean(axis=1), mean_loss(model, optimized, k))

    cs = CanonicalSet(initial, optimized, formatted,
                      forward(model, initial), forward(model, optimized), forward(model, formatted),
                      config, fingerprint, backend or kernels.BACKEND, trajectory)
    s = cs.summary()
    log.info("canonical set (N=%d, E=%d, lr=%g): mean P(preferred) %.4f -> %.4f -> %.4f",
             config.num_inputs, config.epochs, config.learning_rate,
             s["initial"]["mean"], s["optimized"]["mean"], s["formatted"]["mean"])
    return cs


def write_canonical_set(cs: CanonicalSet, schema: FeatureSchema, outdir, prefix: str = "canonical"):
    """JSON summary plus one CSV per stage (and the loss trajectory if recorded).

    Returns the list of written paths.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    header = schema.column_names() + ["p_negative", "p_positive"]
    paths = []
    for name in ("initial", "optimized", "formatted"):
        path = outdir / f"{prefix}_{name}.csv"
        with path.open("w", newline="") as f:
            w = csv.writer(f)
            w.writerow(header)
            for row, p in zip(cs.stage(name), cs.predictions(name)):
                w.writerow([repr(float(v)) for v in row] + [repr(float(v)) for v in p])
        paths.append(path)
    if cs.trajectory is not None:
        path = outdir / f"{prefix}_trajectory.csv"
        with path.open("w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["epoch", "mean_loss"])
            for e, v in enumerate(cs.trajectory):
                w.writerow([e, repr(float(v))])
        paths.append(path)
    meta = {"config": cs.config.to_dict(), "model_fingerprint": cs.model_fingerprint,
            "backend": cs.backend, "n": cs.n, "encoded_dim": schema.encoded_dim,
            "stages": cs.summary()}
    path = outdir / f"{prefix}.json"
    path.write_text(json.dumps(meta, indent=2))
    paths.append(path)
    return paths
