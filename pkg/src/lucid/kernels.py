"""Backend selection for the inverse-design inner loop.

The compiled extension is used when it imported cleanly; set
``LUCID_PURE_PYTHON=1`` to force the numpy fallback.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import _descent_py

try:
    if os.environ.get("LUCID_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-Python backend requested")
    from . import _descent as _compiled
except ImportError:
    _compiled = None

BACKEND = "cython" if _compiled is not None else "python"


class NonFiniteGradient(FloatingPointError):
    def __init__(self, row: int, epoch: int, index: int):
        self.row, self.epoch, self.index = row, epoch, index
        super().__init__(f"non-finite input gradient for canonical input {row} "
                         f"at epoch {epoch}, encoded index {index}")


def flatten_params(model):
    flat_w = np.ascontiguousarray(np.concatenate([w.ravel() for w in model.weights]))
    flat_wt = np.ascontiguousarray(np.concatenate([w.T.ravel() for w in model.weights]))
    flat_b = np.ascontiguousarray(np.concatenate(model.biases))
    dims = np.asarray(model.layer_dims, dtype=np.intp)
    return flat_w, flat_wt, flat_b, dims


def descend_rows(model, X: np.ndarray, target: int, lr: float, epochs: int,
                 losses: np.ndarray | None = None, backend: str | None = None,
                 workers: int = 1) -> None:
    """In-place input-gradient descent on every row of ``X`` (C-contiguous float64).

    With ``workers > 1`` contiguous row blocks run on a thread pool; rows are
    independent, so the result is bitwise identical to a single call.
    """
    impl = {"cython": _compiled, "python": _descent_py}.get(backend or BACKEND)
    if impl is None:
        raise RuntimeError(f"backend {backend!r} is not available")
    if not (X.flags.c_contiguous and X.dtype == np.float64):
        raise ValueError("X must be a C-contiguous float64 array")
    flat_w, flat_wt, flat_b, dims = flatten_params(model)

    def run(lo, hi):
        part = None if losses is None else np.empty((losses.shape[0], hi - lo))
        bad = impl.descend_rows(X[lo:hi], flat_w, flat_wt, flat_b, dims, int(target),
                                float(lr), int(epochs), part)
        if part is not None:
            losses[:, lo:hi] = part
        return None if bad is None else (bad[0] + lo, bad[1], bad[2])

    n = X.shape[0]
    if workers <= 1 or n < 2:
        bad = [run(0, n)]
    else:
        bounds = np.linspace(0, n, min(workers, n) + 1).astype(int)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            bad = list(pool.map(run, bounds[:-1], bounds[1:]))
    bad = [b for b in bad if b is not None]
    if bad:
        raise NonFiniteGradient(*min(bad))


def available_backends() -> list[str]:
    return ["cython", "python"] if _compiled is not None else ["python"]
