"""Pure numpy implementations of the hot kernels.

This is the fallback backend: every function here has a signature-identical
compiled twin in ``_ckernels.pyx``. Inputs are C-contiguous float64 arrays;
outputs are freshly allocated. Large dense matmuls are deliberately NOT part
of this surface -- both backends send those to BLAS through ``np.matmul``.
"""

from __future__ import annotations

import numpy as np

NAME = "numpy"


def sigmoid_fwd(x):
    # sigmoid(x) = exp(-logaddexp(0, -x)): stable for large |x|, one pass
    return np.exp(-np.logaddexp(0.0, -x))


def sigmoid_bwd(y, g):
    return g * y * (1.0 - y)


def tanh_fwd(x):
    return np.tanh(x)


def tanh_bwd(y, g):
    return g * (1.0 - y * y)


def relu_fwd(x):
    return np.maximum(x, 0.0)


def relu_bwd(x, g):
    return np.where(x > 0.0, g, 0.0)


def leaky_relu_fwd(x, slope):
    return np.where(x >= 0.0, x, slope * x)


def leaky_relu_bwd(x, g, slope):
    return np.where(x >= 0.0, g, slope * g)


def softmax_rows_fwd(x):
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_rows_bwd(y, g):
    dot = (g * y).sum(axis=1, keepdims=True)
    return y * (g - dot)


def block_matmul_fwd(a, x, n):
    """Per-block product: a holds M stacked n-by-n blocks, x holds M stacked
    n-by-c blocks; block b of the output is a_b @ x_b."""
    m = a.shape[0] // n
    c = x.shape[1]
    av = a.reshape(m, n, n)
    xv = x.reshape(m, n, c)
    return np.matmul(av, xv).reshape(m * n, c)


def block_matmul_bwd_a(g, x, n):
    m = g.shape[0] // n
    c = x.shape[1]
    gv = g.reshape(m, n, c)
    xv = x.reshape(m, n, c)
    return np.matmul(gv, xv.transpose(0, 2, 1)).reshape(m * n, n)


def block_matmul_bwd_x(a, g, n):
    m = a.shape[0] // n
    c = g.shape[1]
    av = a.reshape(m, n, n)
    gv = g.reshape(m, n, c)
    return np.matmul(av.transpose(0, 2, 1), gv).reshape(m * n, c)


def norm_adjacency_fwd(a, n):
    """Symmetric-style degree normalization of M stacked square blocks.

    For each block: ahat = a + I, d_i = (sum_j ahat_ij)^(-1/2),
    out_ij = d_i * ahat_ij * d_j. Returns (out, d) with d flat of length M*n.
    """
    m = a.shape[0] // n
    ahat = a.reshape(m, n, n) + np.eye(n)
    d = ahat.sum(axis=2) ** -0.5
    out = d[:, :, None] * ahat * d[:, None, :]
    return out.reshape(m * n, n), d.reshape(m * n)


def norm_adjacency_bwd(a, d, g, n):
    m = a.shape[0] // n
    ahat = a.reshape(m, n, n) + np.eye(n)
    dv = d.reshape(m, n)
    gv = g.reshape(m, n, n)
    # r_p = sum_j g_pj ahat_pj d_j ; c_p = sum_i g_ip ahat_ip d_i
    r = (gv * ahat * dv[:, None, :]).sum(axis=2)
    c = (gv * ahat * dv[:, :, None]).sum(axis=1)
    da = gv * dv[:, :, None] * dv[:, None, :]
    da -= (0.5 * dv**3 * (r + c))[:, :, None]
    return da.reshape(m * n, n)


def gather_rows_fwd(x, idx):
    return x[idx]


def gather_rows_bwd(g, idx, n_rows):
    out = np.zeros((n_rows, g.shape[1]), dtype=np.float64)
    np.add.at(out, idx, g)
    return out


def block_mean_fwd(x, n):
    """Mean over each block of n rows and over all columns: (M*n, c) -> (M, 1)."""
    m = x.shape[0] // n
    return x.reshape(m, n * x.shape[1]).mean(axis=1).reshape(m, 1)


def block_mean_bwd(g, n, rows, cols):
    scale = g / (n * cols)
    return np.repeat(scale, n, axis=0) * np.ones((1, cols))
