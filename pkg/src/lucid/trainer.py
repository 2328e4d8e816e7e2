"""Mini-batch gradient descent training and evaluation of the classifiers."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .nn_core import MlpModel, apply_param_step, batch_gradients, forward, init_model

log = logging.getLogger(__name__)

POSITIVE = 1
THRESHOLD = 0.5


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    seed: int
    hidden_dims: tuple[int, ...] = (32, 16)
    epochs: int = 50
    batch_size: int = 64
    learning_rate: float = 0.01

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError(f"learning_rate must lie in (0, 1], got {self.learning_rate}")
        if any(h < 1 for h in self.hidden_dims):
            raise ValueError(f"hidden_dims must be positive, got {self.hidden_dims}")
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        if "seed" not in d:
            raise ValueError("train config requires an explicit 'seed'")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden_dims"] = list(self.hidden_dims)
        return d


@dataclass
class TrainReport:
    final_train_accuracy: float
    final_test_accuracy: float | None
    loss_curve: list[float]
    positive_fraction: float
    n_train: int
    n_test: int = 0
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def one_hot(labels: np.ndarray) -> np.ndarray:
    T = np.zeros((len(labels), 2))
    T[np.arange(len(labels)), np.asarray(labels, dtype=int)] = 1.0
    return T


def train(X: np.ndarray, y: np.ndarray, config: TrainConfig,
          X_test: np.ndarray | None = None, y_test: np.ndarray | None = None):
    """Fit an MLP on encoded rows ``X`` with binary labels ``y``.

    Returns ``(model, TrainReport)``.  Inputs are not modified.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or len(X) == 0 or len(X) != len(y):
        raise TrainingError(f"need a non-empty 2-D design matrix matching labels, "
                            f"got X{X.shape}, y{y.shape}")
    if len(np.unique(y)) < 2:
        raise TrainingError("training set contains a single class")

    rng = np.random.default_rng(config.seed)
    dims = (X.shape[1], *config.hidden_dims, 2)
    model = init_model(dims, int(rng.integers(2**63)))
    T = one_hot(y)
    n = len(X)
    curve = []
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            loss, gw, gb = batch_gradients(model, X[idx], T[idx])
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}")
            total += loss * len(idx)
            model = apply_param_step(model, gw, gb, config.learning_rate)
        curve.append(total / n)
        log.debug("epoch %d: mean loss %.5f", epoch, curve[-1])

    train_acc = evaluate(model, X, y)[0]
    test_acc = None
    if X_test is not None and len(X_test):
        test_acc = evaluate(model, X_test, y_test)[0]
    log.info("trained %s: train acc %.4f, test acc %s", dims, train_acc,
             "n/a" if test_acc is None else f"{test_acc:.4f}")
    report = TrainReport(train_acc, test_acc, curve, float(y.mean()), n,
                         0 if X_test is None else len(X_test), config.to_dict())
    return model, report


def predict(model: MlpModel, X: np.ndarray) -> np.ndarray:
    """Hard labels: positive iff P(positive) is strictly above 0.5."""
    p = forward(model, np.atleast_2d(X))[:, POSITIVE]
    return (p > THRESHOLD).astype(np.int64)


def evaluate(model: MlpModel, X: np.ndarray, y: np.ndarray):
    """``(accuracy, predictions)`` of ``model`` on encoded rows."""
    if len(X) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    pred = predict(model, X)
    return float((pred == np.asarray(y)).mean()), pred
