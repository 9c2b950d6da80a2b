# cython: language_level=3
"""Compiled twins of ``numpy_kernels`` (same names, same contracts).

Loops are written block-at-a-time; blocks in this model are small (one per
graph snapshot), which is exactly where interpreter and temporary-array
overhead hurts the numpy path.
"""

import numpy as np

from libc.math cimport exp, tanh as ctanh

NAME = "cython"


def sigmoid_fwd(double[:, ::1] x):
    cdef Py_ssize_t r = x.shape[0], c = x.shape[1], i, j
    out_arr = np.empty((r, c), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double v, e
    for i in range(r):
        for j in range(c):
            v = x[i, j]
            if v >= 0.0:
                out[i, j] = 1.0 / (1.0 + exp(-v))
            else:
                e = exp(v)
                out[i, j] = e / (1.0 + e)
    return out_arr


def sigmoid_bwd(double[:, ::1] y, double[:, ::1] g):
    cdef Py_ssize_t r = y.shape[0], c = y.shape[1], i, j
    out_arr = np.empty((r, c), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double s
    for i in range(r):
        for j in range(c):
            s = y[i, j]
            out[i, j] = g[i, j] * s * (1.0 - s)
    return out_arr


def tanh_fwd(double[:, ::1] x):
    cdef Py_ssize_t r = x.shape[0], c = x.shape[1], i, j
    out_arr = np.empty((r, c), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    for i in range(r):
        for j in range(c):
            out[i, j] = ctanh(x[i, j])
    return out_arr


def tanh_bwd(double[:, ::1] y, double[:, ::1] g):
    cdef Py_ssize_t r = y.shape[0], c = y.shape[1], i, j
    out_arr = np.empty((r, c), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double t
    for i in range(r):
        for j in range(c):
            t = y[i, j]
            out[i, j] = g[i, j] * (1.0 - t * t)
    return out_arr


def relu_fwd(double[:, ::1] x):
    cdef Py_ssize_t r = x.shape[0], c = x.shape[1], i, j
    out_arr = np.empty((r, c), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double v
    for i in range(r):
        for j in range(c):
            v = x[i, j]
            out[i, j] = v if v > 0.0 else 0.0
    return out_arr


def relu_bwd(double[:, ::1] x, double[:, ::1] g):
    cdef Py_ssize_t r = x.shape[0], c = x.shape[1], i, j
    out_arr = np.empty((r, c), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    for i in range(r):
        for j in range(c):
            out[i, j] = g[i, j] if x[i, j] > 0.0 else 0.0
    return out_arr


def leaky_relu_fwd(double[:, ::1] x, double slope):
    cdef Py_ssize_t r = x.shape[0], c = x.shape[1], i, j
    out_arr = np.empty((r, c), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double v
    for i in range(r):
        for j in range(c):
            v = x[i, j]
            out[i, j] = v if v >= 0.0 else slope * v
    return out_arr


def leaky_relu_bwd(double[:, ::1] x, double[:, ::1] g, double slope):
    cdef Py_ssize_t r = x.shape[0], c = x.shape[1], i, j
    out_arr = np.empty((r, c), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    for i in range(r):
        for j in range(c):
            out[i, j] = g[i, j] if x[i, j] >= 0.0 else slope * g[i, j]
    return out_arr


def softmax_rows_fwd(double[:, ::1] x):
    cdef Py_ssize_t r = x.shape[0], c = x.shape[1], i, j
    out_arr = np.empty((r, c), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double mx, s, e
    for i in range(r):
        mx = x[i, 0]
        for j in range(1, c):
            if x[i, j] > mx:
                mx = x[i, j]
        s = 0.0
        for j in range(c):
            e = exp(x[i, j] - mx)
            out[i, j] = e
            s += e
        for j in range(c):
            out[i, j] /= s
    return out_arr


def softmax_rows_bwd(double[:, ::1] y, double[:, ::1] g):
    cdef Py_ssize_t r = y.shape[0], c = y.shape[1], i, j
    out_arr = np.empty((r, c), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double dot
    for i in range(r):
        dot = 0.0
        for j in range(c):
            dot += g[i, j] * y[i, j]
        for j in range(c):
            out[i, j] = y[i, j] * (g[i, j] - dot)
    return out_arr


def block_matmul_fwd(double[:, ::1] a, double[:, ::1] x, Py_ssize_t n):
    cdef Py_ssize_t m = a.shape[0] // n, c = x.shape[1], b, i, j, k, r0
    out_arr = np.zeros((m * n, c), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double aik
    for b in range(m):
        r0 = b * n
        for i in range(n):
            for k in range(n):
                aik = a[r0 + i, k]
                if aik != 0.0:
                    for j in range(c):
                        out[r0 + i, j] += aik * x[r0 + k, j]
    return out_arr


def block_matmul_bwd_a(double[:, ::1] g, double[:, ::1] x, Py_ssize_t n):
    cdef Py_ssize_t m = g.shape[0] // n, c = x.shape[1], b, i, j, k, r0
    out_arr = np.empty((m * n, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double acc
    for b in range(m):
        r0 = b * n
        for i in range(n):
            for k in range(n):
                acc = 0.0
                for j in range(c):
                    acc += g[r0 + i, j] * x[r0 + k, j]
                out[r0 + i, k] = acc
    return out_arr


def block_matmul_bwd_x(double[:, ::1] a, double[:, ::1] g, Py_ssize_t n):
    cdef Py_ssize_t m = a.shape[0] // n, c = g.shape[1], b, i, j, k, r0
    out_arr = np.zeros((m * n, c), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double aik
    for b in range(m):
        r0 = b * n
        for i in range(n):
            for k in range(n):
                aik = a[r0 + i, k]
                if aik != 0.0:
                    for j in range(c):
                        out[r0 + k, j] += aik * g[r0 + i, j]
    return out_arr


def norm_adjacency_fwd(double[:, ::1] a, Py_ssize_t n):
    cdef Py_ssize_t m = a.shape[0] // n, b, i, j, r0
    out_arr = np.empty((m * n, n), dtype=np.float64)
    d_arr = np.empty(m * n, dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double[::1] d = d_arr
    cdef double s, ahat
    for b in range(m):
        r0 = b * n
        for i in range(n):
            s = 1.0  # self-loop
            for j in range(n):
                s += a[r0 + i, j]
            d[r0 + i] = s ** -0.5
        for i in range(n):
            for j in range(n):
                ahat = a[r0 + i, j] + (1.0 if i == j else 0.0)
                out[r0 + i, j] = d[r0 + i] * ahat * d[r0 + j]
    return out_arr, d_arr


def norm_adjacency_bwd(double[:, ::1] a, double[::1] d, double[:, ::1] g, Py_ssize_t n):
    cdef Py_ssize_t m = a.shape[0] // n, b, i, j, r0
    out_arr = np.empty((m * n, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double ahat, rp, cp, corr
    # per block: da_pq = g_pq d_p d_q - 0.5 d_p^3 (r_p + c_p)
    for b in range(m):
        r0 = b * n
        for i in range(n):
            rp = 0.0
            cp = 0.0
            for j in range(n):
                ahat = a[r0 + i, j] + (1.0 if i == j else 0.0)
                rp += g[r0 + i, j] * ahat * d[r0 + j]
                ahat = a[r0 + j, i] + (1.0 if i == j else 0.0)
                cp += g[r0 + j, i] * ahat * d[r0 + j]
            corr = 0.5 * d[r0 + i] ** 3 * (rp + cp)
            for j in range(n):
                out[r0 + i, j] = g[r0 + i, j] * d[r0 + i] * d[r0 + j] - corr
    return out_arr


def gather_rows_fwd(double[:, ::1] x, long[::1] idx):
    cdef Py_ssize_t r = idx.shape[0], c = x.shape[1], i, j, src
    out_arr = np.empty((r, c), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    for i in range(r):
        src = idx[i]
        for j in range(c):
            out[i, j] = x[src, j]
    return out_arr


def gather_rows_bwd(double[:, ::1] g, long[::1] idx, Py_ssize_t n_rows):
    cdef Py_ssize_t r = idx.shape[0], c = g.shape[1], i, j, dst
    out_arr = np.zeros((n_rows, c), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    for i in range(r):
        dst = idx[i]
        for j in range(c):
            out[dst, j] += g[i, j]
    return out_arr


def block_mean_fwd(double[:, ::1] x, Py_ssize_t n):
    cdef Py_ssize_t m = x.shape[0] // n, c = x.shape[1], b, i, j
    out_arr = np.empty((m, 1), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double s
    for b in range(m):
        s = 0.0
        for i in range(n):
            for j in range(c):
                s += x[b * n + i, j]
        out[b, 0] = s / (n * c)
    return out_arr


def block_mean_bwd(double[:, ::1] g, Py_ssize_t n, Py_ssize_t rows, Py_ssize_t cols):
    cdef Py_ssize_t m = g.shape[0], b, i, j
    out_arr = np.empty((rows, cols), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double v
    for b in range(m):
        v = g[b, 0] / (n * cols)
        for i in range(n):
            for j in range(cols):
                out[b * n + i, j] = v
    return out_arr
