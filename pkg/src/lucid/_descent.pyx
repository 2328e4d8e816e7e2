# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled input-gradient descent for the ReLU/softmax MLP.

Rows are processed one at a time with a fixed summation order, so row ``i``
of the result never depends on the other rows or on the batch size.
"""

from libc.math cimport exp, log, isfinite
from libc.stdlib cimport malloc, free


cdef double LOG_CLAMP = 1e-12


cdef int _descend_row(double* x, const double* W, const double* WT, const double* B,
                      const Py_ssize_t* dims, Py_ssize_t n_layers,
                      Py_ssize_t target, double lr, Py_ssize_t epochs,
                      double* z, double* d0, double* d1,
                      double* losses, Py_ssize_t loss_stride,
                      Py_ssize_t* bad_epoch, Py_ssize_t* bad_index) noexcept nogil:
    cdef Py_ssize_t e, k, o, j, n_in, n_out, wo, bo, zo, zprev
    cdef double s, m, p0, p1, pt
    cdef const double* a_prev
    cdef double* dcur
    cdef double* dnext
    cdef double* tmp
    cdef Py_ssize_t M = dims[0]

    for e in range(epochs):
        # forward; z holds every layer's pre-activation back to back
        wo = 0
        bo = 0
        zo = 0
        a_prev = x
        for k in range(n_layers):
            n_in = dims[k]
            n_out = dims[k + 1]
            # axpy form over the transposed weights; skips inactive ReLU units
            for o in range(n_out):
                z[zo + o] = B[bo + o]
            for j in range(n_in):
                s = a_prev[j]
                if s != 0.0:
                    for o in range(n_out):
                        z[zo + o] += WT[wo + j * n_out + o] * s
            if k < n_layers - 1:
                # relu activations stored after the pre-activations of the same layer
                for o in range(n_out):
                    z[zo + n_out + o] = z[zo + o] if z[zo + o] > 0.0 else 0.0
                a_prev = z + zo + n_out
                zo += 2 * n_out
            wo += n_in * n_out
            bo += n_out

        m = z[zo] if z[zo] > z[zo + 1] else z[zo + 1]
        p0 = exp(z[zo] - m)
        p1 = exp(z[zo + 1] - m)
        s = p0 + p1
        p0 = p0 / s
        p1 = p1 / s
        if losses != NULL:
            pt = p1 if target == 1 else p0
            if pt < LOG_CLAMP:
                pt = LOG_CLAMP
            losses[e * loss_stride] = -log(pt)

        d0[0] = p0 - (1.0 if target == 0 else 0.0)
        d0[1] = p1 - (1.0 if target == 1 else 0.0)

        # backward to the input
        dcur = d0
        dnext = d1
        for k in range(n_layers - 1, -1, -1):
            n_in = dims[k]
            n_out = dims[k + 1]
            wo -= n_in * n_out
            for j in range(n_in):
                dnext[j] = 0.0
            for o in range(n_out):
                s = dcur[o]
                for j in range(n_in):
                    dnext[j] += W[wo + o * n_in + j] * s
            if k > 0:
                zprev = zo - 2 * n_in
                for j in range(n_in):
                    if not z[zprev + j] > 0.0:
                        dnext[j] = 0.0
                zo = zprev
            tmp = dcur
            dcur = dnext
            dnext = tmp

        for j in range(M):
            if not isfinite(dcur[j]):
                bad_epoch[0] = e
                bad_index[0] = j
                return -1
        for j in range(M):
            x[j] -= lr * dcur[j]
    return 0


def descend_rows(double[:, ::1] X, double[::1] flat_w, double[::1] flat_wt, double[::1] flat_b,
                 Py_ssize_t[::1] dims, Py_ssize_t target, double lr,
                 Py_ssize_t epochs, losses=None):
    """Run ``epochs`` gradient steps on every row of ``X`` in place.

    ``flat_w`` holds each layer's (out, in) weights row-major, ``flat_wt``
    the same layers transposed.  ``losses`` (optional, ``(epochs, N)`` float64) receives the loss before
    each step.  Returns ``None`` or ``(row, epoch, index)`` of the first
    non-finite gradient.
    """
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t n_layers = dims.shape[0] - 1
    cdef Py_ssize_t i, k, zsize = 0, dmax = 2
    cdef Py_ssize_t bad_epoch = -1, bad_index = -1
    cdef int status = 0
    cdef double[:, ::1] L
    cdef double* lbase = NULL
    cdef Py_ssize_t lstride = 0

    if flat_wt.shape[0] != flat_w.shape[0]:
        raise ValueError("flat_wt must hold the transposed copy of flat_w")
    if X.shape[1] != dims[0]:
        raise ValueError(f"X has {X.shape[1]} columns, model expects {dims[0]}")
    for k in range(n_layers + 1):
        zsize += 2 * dims[k]
        if dims[k] > dmax:
            dmax = dims[k]
    if losses is not None:
        L = losses
        if L.shape[0] != epochs or L.shape[1] != n:
            raise ValueError("losses must have shape (epochs, N)")
        lstride = n
    if n == 0 or epochs == 0:
        return None
    if losses is not None:
        lbase = &L[0, 0]

    cdef double* z = <double*> malloc(zsize * sizeof(double))
    cdef double* d0 = <double*> malloc(dmax * sizeof(double))
    cdef double* d1 = <double*> malloc(dmax * sizeof(double))
    if z == NULL or d0 == NULL or d1 == NULL:
        free(z); free(d0); free(d1)
        raise MemoryError()
    try:
        with nogil:
            for i in range(n):
                status = _descend_row(&X[i, 0], &flat_w[0], &flat_wt[0], &flat_b[0], &dims[0], n_layers,
                                      target, lr, epochs, z, d0, d1,
                                      lbase + i if lbase != NULL else NULL, lstride,
                                      &bad_epoch, &bad_index)
                if status != 0:
                    break
    finally:
        free(z); free(d0); free(d1)
    if status != 0:
        return (i, bad_epoch, bad_index)
    return None
