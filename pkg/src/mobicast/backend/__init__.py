"""Kernel backend selection.

Two interchangeable implementations of the hot kernels exist: a compiled
Cython extension (``_ckernels``) and a pure numpy module
(``numpy_kernels``). ``MOBICAST_BACKEND`` picks one:

  auto    (default) a measured hybrid: compiled loops where they beat
          numpy on the training workload shapes (scatter-add, fused
          activations, adjacency normalization; see
          benchmarks/bench_backends.py), numpy where BLAS/SIMD wins
          (batched block matmul, tanh, row gather). Falls back to pure
          numpy when the extension is not built.
  numpy   pure numpy everywhere
  cython  pure compiled everywhere (error if not built)

Large dense matrix products are never backend-switched: numpy already
routes them to BLAS and all modes use it.
"""

from __future__ import annotations

import os
import types

from . import numpy_kernels

_KERNEL_FUNCS = (
    "sigmoid_fwd", "sigmoid_bwd", "tanh_fwd", "tanh_bwd",
    "relu_fwd", "relu_bwd", "leaky_relu_fwd", "leaky_relu_bwd",
    "softmax_rows_fwd", "softmax_rows_bwd",
    "block_matmul_fwd", "block_matmul_bwd_a", "block_matmul_bwd_x",
    "norm_adjacency_fwd", "norm_adjacency_bwd",
    "gather_rows_fwd", "gather_rows_bwd",
    "block_mean_fwd", "block_mean_bwd",
)

# kernels where the compiled loop beat numpy on the workload shapes
_COMPILED_WINNERS = (
    "sigmoid_fwd",
    "sigmoid_bwd",
    "tanh_bwd",
    "leaky_relu_fwd",
    "leaky_relu_bwd",
    "relu_fwd",
    "relu_bwd",
    "softmax_rows_fwd",
    "softmax_rows_bwd",
    "norm_adjacency_fwd",
    "norm_adjacency_bwd",
    "gather_rows_bwd",
)

_requested = os.environ.get("MOBICAST_BACKEND", "auto").lower()

if _requested not in ("auto", "numpy", "cython"):
    raise ValueError(
        f"MOBICAST_BACKEND must be 'auto', 'numpy' or 'cython', got {_requested!r}"
    )

try:
    from . import _ckernels  # type: ignore[attr-defined]
except ImportError:
    _ckernels = None
    if _requested == "cython":
        raise ImportError(
            "MOBICAST_BACKEND=cython but the compiled extension is not "
            "available; build it with `pip install -e .` or drop the override"
        ) from None

if _requested == "numpy" or (_requested == "auto" and _ckernels is None):
    kernels = numpy_kernels
elif _requested == "cython":
    kernels = _ckernels
else:
    kernels = types.SimpleNamespace(NAME="hybrid")
    for _name in _KERNEL_FUNCS:
        src = _ckernels if _name in _COMPILED_WINNERS else numpy_kernels
        setattr(kernels, _name, getattr(src, _name))

BACKEND_NAME: str = kernels.NAME

__all__ = ["kernels", "BACKEND_NAME", "numpy_kernels"]
