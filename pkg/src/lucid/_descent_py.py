"""Pure numpy fallback for :mod:`lucid._descent`.

Matrix products go through ``np.einsum`` (no BLAS) so that each row is
accumulated in a fixed order regardless of how many rows share the batch.
"""

import numpy as np

LOG_CLAMP = 1e-12


def _unflatten(flat_w, flat_b, dims):
    ws, bs, wo, bo = [], [], 0, 0
    for n_in, n_out in zip(dims[:-1], dims[1:]):
        ws.append(flat_w[wo:wo + n_in * n_out].reshape(n_out, n_in))
        bs.append(flat_b[bo:bo + n_out])
        wo += n_in * n_out
        bo += n_out
    return ws, bs


def descend_rows(X, flat_w, flat_wt, flat_b, dims, target, lr, epochs, losses=None):
    """Same contract as the compiled ``descend_rows``."""
    dims = [int(d) for d in dims]
    if X.shape[1] != dims[0]:
        raise ValueError(f"X has {X.shape[1]} columns, model expects {dims[0]}")
    if losses is not None and losses.shape != (epochs, X.shape[0]):
        raise ValueError("losses must have shape (epochs, N)")
    n = X.shape[0]
    if n == 0 or epochs == 0:
        return None
    ws, bs = _unflatten(flat_w, flat_b, dims)
    last = len(ws) - 1
    T = np.zeros((n, 2))
    T[:, target] = 1.0
    for e in range(epochs):
        a = X
        masks = []
        for k, (w, b) in enumerate(zip(ws, bs)):
            z = np.einsum("no,io->ni", a, w) + b
            if k < last:
                masks.append(z > 0.0)
                a = np.where(masks[-1], z, 0.0)
        z = z - z.max(axis=1, keepdims=True)
        p = np.exp(z)
        p /= p.sum(axis=1, keepdims=True)
        if losses is not None:
            losses[e] = -np.log(np.maximum(p[:, target], LOG_CLAMP))
        d = p - T
        for k in range(last, -1, -1):
            d = np.einsum("no,oi->ni", d, ws[k])
            if k > 0:
                d = np.where(masks[k - 1], d, 0.0)
        bad = ~np.isfinite(d)
        if bad.any():
            i, j = np.argwhere(bad)[0]
            return int(i), e, int(j)
        X -= lr * d
    return None
