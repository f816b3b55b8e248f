# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled training kernels: fused forward/backward/momentum-SGD for the
fully-connected nets, with matrix products delegated to BLAS sgemm.

Mirrors the contracts of ``_python.py``; selected at import by
``pppl.nn.backends`` when available.
"""

from libc.math cimport exp, log, isfinite, fabs

import numpy as np

from scipy.linalg.cython_blas cimport sgemm

NAME = "ext"


cdef void _gemm_rm(bint ta, bint tb, float alpha,
                   float[:, ::1] a, float[:, ::1] b, float beta,
                   float[:, ::1] c) noexcept nogil:
    """Row-major c = alpha * op(a) @ op(b) + beta * c via column-major BLAS
    (operands swapped, shapes transposed)."""
    cdef int m = c.shape[1]          # columns of c == rows of c^T
    cdef int n = c.shape[0]
    cdef int k = a.shape[0] if ta else a.shape[1]
    cdef int lda = b.shape[1]
    cdef int ldb = a.shape[1]
    cdef int ldc = c.shape[1]
    cdef char cta = b't' if tb else b'n'
    cdef char ctb = b't' if ta else b'n'
    if m == 0 or n == 0:
        return
    if k == 0:
        if beta == 0.0:
            c[:, :] = 0.0
        return
    sgemm(&cta, &ctb, &m, &n, &k, &alpha,
          &b[0, 0], &lda, &a[0, 0], &ldb, &beta, &c[0, 0], &ldc)


cdef void _add_bias_relu(float[:, ::1] out, float[::1] bias, bint relu) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef float v
    for i in range(out.shape[0]):
        for j in range(out.shape[1]):
            v = out[i, j] + bias[j]
            if relu and v < 0.0:
                v = 0.0
            out[i, j] = v


def _as_f32(arr):
    return np.ascontiguousarray(arr, dtype=np.float32)


def forward(list weights, list biases, x):
    """Raw output scores for a batch; rectifier on hidden layers only."""
    cdef float[:, ::1] cur = _as_f32(x)
    cdef float[:, ::1] nxt
    cdef Py_ssize_t l, last = len(weights) - 1
    out = None
    for l in range(len(weights)):
        out = np.empty((cur.shape[0], (<object>weights[l]).shape[1]), dtype=np.float32)
        nxt = out
        _gemm_rm(False, False, 1.0, cur, weights[l], 0.0, nxt)
        _add_bias_relu(nxt, biases[l], l < last)
        cur = nxt
    return out


cdef double _output_delta(float[:, ::1] scores, float[:, ::1] targets,
                          float[::1] w, int loss_is_ce,
                          float[:, ::1] delta) noexcept nogil:
    """Writes d(loss)/d(scores) into ``delta`` and returns the loss."""
    cdef Py_ssize_t n = scores.shape[0], m = scores.shape[1], i, j
    cdef double loss = 0.0, acc, zmax, esum, coef, d
    for i in range(n):
        if loss_is_ce:
            zmax = scores[i, 0]
            for j in range(1, m):
                if scores[i, j] > zmax:
                    zmax = scores[i, j]
            esum = 0.0
            acc = 0.0
            for j in range(m):
                esum += exp(<double>scores[i, j] - zmax)
                acc += (<double>scores[i, j] - zmax) * targets[i, j]
            loss += w[i] * (log(esum) - acc)
            coef = <double>w[i] / n
            for j in range(m):
                delta[i, j] = <float>(coef * (exp(<double>scores[i, j] - zmax) / esum
                                              - targets[i, j]))
        else:
            acc = 0.0
            coef = 2.0 * <double>w[i] / n
            for j in range(m):
                d = <double>scores[i, j] - targets[i, j]
                acc += d * d
                delta[i, j] = <float>(coef * d)
            loss += w[i] * acc
    return loss / n


def _forward_keep(list weights, list biases, x):
    """Forward pass retaining per-layer activations for backprop."""
    cdef float[:, ::1] cur = _as_f32(x)
    cdef float[:, ::1] nxt
    cdef Py_ssize_t l, last = len(weights) - 1
    acts = [np.asarray(cur)]
    for l in range(len(weights)):
        out = np.empty((cur.shape[0], (<object>weights[l]).shape[1]), dtype=np.float32)
        nxt = out
        _gemm_rm(False, False, 1.0, cur, weights[l], 0.0, nxt)
        _add_bias_relu(nxt, biases[l], l < last)
        acts.append(out)
        cur = nxt
    return acts


cdef _backward(list weights, list acts, object delta_arr):
    """Gradients per layer given the output delta; returns (gw, gb) lists."""
    cdef Py_ssize_t nlayers = len(weights), l, i, j
    cdef float[:, ::1] delta, prev, gw, h, wmat
    cdef float[::1] gb
    grad_w = [None] * nlayers
    grad_b = [None] * nlayers
    for l in range(nlayers - 1, -1, -1):
        delta = delta_arr
        h = acts[l]
        gw_arr = np.empty(((<object>weights[l]).shape[0], (<object>weights[l]).shape[1]),
                          dtype=np.float32)
        gb_arr = np.zeros((<object>weights[l]).shape[1], dtype=np.float32)
        gw = gw_arr
        gb = gb_arr
        with nogil:
            _gemm_rm(True, False, 1.0, h, delta, 0.0, gw)
            for i in range(delta.shape[0]):
                for j in range(delta.shape[1]):
                    gb[j] += delta[i, j]
        grad_w[l] = gw_arr
        grad_b[l] = gb_arr
        if l > 0:
            prev_arr = np.empty((delta.shape[0], (<object>weights[l]).shape[0]),
                                dtype=np.float32)
            prev = prev_arr
            wmat = weights[l]
            with nogil:
                _gemm_rm(False, True, 1.0, delta, wmat, 0.0, prev)
                for i in range(prev.shape[0]):
                    for j in range(prev.shape[1]):
                        if h[i, j] <= 0.0:
                            prev[i, j] = 0.0
            delta_arr = prev_arr
    return grad_w, grad_b


def loss_and_grads(list weights, list biases, x, targets, sample_weights, loss_kind):
    cdef int ce = 1 if loss_kind == "ce" else 0
    acts = _forward_keep(weights, biases, x)
    scores = acts.pop()
    cdef float[:, ::1] sc = scores
    cdef float[:, ::1] tg = _as_f32(targets)
    cdef float[::1] sw = np.ascontiguousarray(sample_weights, dtype=np.float32)
    delta_arr = np.empty_like(scores)
    cdef float[:, ::1] delta = delta_arr
    cdef double loss
    with nogil:
        loss = _output_delta(sc, tg, sw, ce, delta)
    grad_w, grad_b = _backward(weights, acts, delta_arr)
    return loss, grad_w, grad_b


cdef double _abs_sum(list arrays):
    cdef double acc = 0.0
    cdef float[:, ::1] g2
    cdef float[::1] g1
    cdef Py_ssize_t i, j
    for arr in arrays:
        if (<object>arr).ndim == 2:
            g2 = arr
            with nogil:
                for i in range(g2.shape[0]):
                    for j in range(g2.shape[1]):
                        acc += fabs(g2[i, j])
        else:
            g1 = arr
            with nogil:
                for i in range(g1.shape[0]):
                    acc += fabs(g1[i])
    return acc


def train_step(list weights, list biases, list vel_w, list vel_b,
               x, targets, sample_weights, learning_rate, momentum, loss_kind):
    """One in-place momentum-SGD step; returns the pre-step loss, or NaN
    without updating when the loss or a gradient is non-finite."""
    cdef double loss
    loss, grad_w, grad_b = loss_and_grads(weights, biases, x, targets,
                                          sample_weights, loss_kind)
    if not isfinite(loss) or not isfinite(_abs_sum(grad_w) + _abs_sum(grad_b)):
        return float("nan")
    cdef float lr = <float>learning_rate
    cdef float mom = <float>momentum
    cdef float[:, ::1] p2, v2, g2
    cdef float[::1] p1, v1, g1
    cdef Py_ssize_t l, i, j
    for l in range(len(weights)):
        p2 = weights[l]
        v2 = vel_w[l]
        g2 = grad_w[l]
        with nogil:
            for i in range(p2.shape[0]):
                for j in range(p2.shape[1]):
                    v2[i, j] = mom * v2[i, j]
                    v2[i, j] = v2[i, j] - lr * g2[i, j]
                    p2[i, j] = p2[i, j] + v2[i, j]
        p1 = biases[l]
        v1 = vel_b[l]
        g1 = grad_b[l]
        with nogil:
            for i in range(p1.shape[0]):
                v1[i] = mom * v1[i]
                v1[i] = v1[i] - lr * g1[i]
                p1[i] = p1[i] + v1[i]
    return loss
