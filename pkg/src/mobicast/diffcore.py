"""Minimal deterministic reverse-mode automatic differentiation.

The substrate is a dense 2-D float64 matrix (`Tensor`). Operations run
eagerly; when a `Tape` is active and an input participates in
differentiation, the operation appends a node to the tape (define-by-run,
so the graph is rebuilt on every forward pass). `backward(loss)` replays
the tape once in reverse, accumulating gradients into every
gradient-requiring leaf, then clears the tape.

Tapes are strictly single-threaded. A `Tensor` that does not require a
gradient is immutable by convention and may be shared across threads; a
tape must never be. The active tape is tracked with a `contextvars`
variable so concurrent request handlers each see their own.

Rank-3 model inputs are represented as Python sequences of matrices; a few
"block" operations (``block_matmul``, ``normalize_adjacency_blocks``,
``block_mean``) treat a tall matrix as a stack of equally sized blocks so
that per-graph work can be batched without a native rank-3 type.
"""

from __future__ import annotations

import contextvars
from typing import Callable

import numpy as np

from .backend import kernels
from .errors import ContractError, DomainError, ShapeError

__all__ = [
    "Tensor",
    "Tape",
    "backward",
    "matmul",
    "add",
    "sub",
    "hadamard",
    "elementwise",
    "scale",
    "add_scalar",
    "sigmoid",
    "tanh",
    "relu",
    "leaky_relu",
    "activation",
    "softmax_rows",
    "reduce",
    "mul_colvec",
    "concat_cols",
    "slice_cols",
    "gather_rows",
    "reshape",
    "block_mean",
    "block_matmul",
    "normalize_adjacency_blocks",
]

_ACTIVE_TAPE: contextvars.ContextVar["Tape | None"] = contextvars.ContextVar(
    "mobicast_active_tape", default=None
)


class Tensor:
    """Dense 2-D float64 matrix, optionally tracked for gradients.

    ``grad`` is present (non-None) only on gradient-requiring tensors, and
    only after a backward sweep has populated it.
    """

    __slots__ = ("values", "grad", "requires_grad", "_leaf", "_tape")

    def __init__(self, values, requires_grad: bool = False):
        arr = np.ascontiguousarray(values, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr.reshape(1, -1)
        if arr.ndim != 2:
            raise ShapeError(f"Tensor must be 2-D, got shape {arr.shape}")
        self.values = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._leaf = requires_grad
        self._tape: Tape | None = None

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        t = cls.__new__(cls)
        t.values = arr
        t.grad = None
        t.requires_grad = False
        t._leaf = False
        t._tape = None
        return t

    @classmethod
    def zeros(cls, rows: int, cols: int, requires_grad: bool = False) -> "Tensor":
        return cls(np.zeros((rows, cols)), requires_grad=requires_grad)

    @classmethod
    def identity(cls, n: int) -> "Tensor":
        return cls(np.eye(n))

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def item(self) -> float:
        if self.values.size != 1:
            raise ContractError(f"item() on non-scalar tensor of shape {self.shape}")
        return float(self.values[0, 0])

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"


class _Node:
    __slots__ = ("op", "inputs", "out", "bwd")

    def __init__(self, op: str, inputs: tuple, out: Tensor, bwd: Callable):
        self.op = op
        self.inputs = inputs
        self.out = out
        self.bwd = bwd


class Tape:
    """Append-only record of operations, replayed in reverse by backward().

    Nodes are recorded in execution order, which is already topological.
    """

    def __init__(self):
        self.nodes: list[_Node] = []
        self._token = None
        self._consumed = False

    def __enter__(self) -> "Tape":
        self._token = _ACTIVE_TAPE.set(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE_TAPE.reset(self._token)

    def record(self, op: str, inputs: tuple, out: Tensor, bwd: Callable) -> None:
        out.requires_grad = True
        out._tape = self
        self.nodes.append(_Node(op, inputs, out, bwd))

    def clear(self) -> None:
        self.nodes.clear()
        self._consumed = True


def _tape_for(*tensors: Tensor) -> Tape | None:
    tape = _ACTIVE_TAPE.get()
    if tape is None:
        return None
    if any(t.requires_grad for t in tensors):
        return tape
    return None


def backward(loss: Tensor) -> None:
    """Populate ``grad`` on every gradient-requiring leaf below ``loss``.

    The tape that recorded ``loss`` is consumed: after the sweep it is
    cleared and cannot be replayed.
    """
    if loss.values.shape != (1, 1):
        raise ContractError(
            f"backward() needs a 1x1 scalar loss, got shape {loss.shape}"
        )
    tape = loss._tape
    if tape is None:
        raise ContractError(
            "loss was not produced under an active Tape (nothing to differentiate)"
        )
    if tape._consumed:
        raise ContractError("tape already consumed by a previous backward()")

    loss.grad = np.ones((1, 1))
    for node in reversed(tape.nodes):
        g_out = node.out.grad
        if g_out is None:
            continue  # no downstream use of this node's output
        contribs = node.bwd(g_out)
        for t, g in zip(node.inputs, contribs):
            if g is None or not t.requires_grad:
                continue
            if t.grad is None:
                # own a C-contiguous buffer; g may be the upstream gradient
                # itself (identity ops) or a strided view of it
                t.grad = g.copy() if g is g_out else np.ascontiguousarray(g)
            else:
                t.grad += g
    # intermediates (every node output) drop their gradient; leaves keep it
    for node in tape.nodes:
        if not node.out._leaf:
            node.out.grad = None
    tape.clear()


# ---------------------------------------------------------------------------
# ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.cols != b.rows:
        raise ShapeError(
            f"matmul: inner dimensions disagree, {a.shape} x {b.shape}"
        )
    out = Tensor._wrap(np.matmul(a.values, b.values))
    tape = _tape_for(a, b)
    if tape is not None:

        def bwd(g, a=a, b=b):
            ga = np.matmul(g, b.values.T) if a.requires_grad else None
            gb = np.matmul(a.values.T, g) if b.requires_grad else None
            return ga, gb

        tape.record("matmul", (a, b), out, bwd)
    return out


def _check_elementwise_shapes(op: str, a: Tensor, b: Tensor, allow_row: bool) -> bool:
    """Returns True when b is a broadcast 1 x cols row."""
    if a.shape == b.shape:
        return False
    if allow_row and b.rows == 1 and b.cols == a.cols:
        return True
    raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    row_broadcast = _check_elementwise_shapes("add", a, b, allow_row=True)
    out = Tensor._wrap(a.values + b.values)
    tape = _tape_for(a, b)
    if tape is not None:

        def bwd(g, a=a, b=b, row=row_broadcast):
            ga = g if a.requires_grad else None
            if not b.requires_grad:
                gb = None
            elif row:
                gb = g.sum(axis=0, keepdims=True)
            else:
                gb = g
            return ga, gb

        tape.record("add", (a, b), out, bwd)
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_elementwise_shapes("sub", a, b, allow_row=False)
    out = Tensor._wrap(a.values - b.values)
    tape = _tape_for(a, b)
    if tape is not None:

        def bwd(g, a=a, b=b):
            ga = g if a.requires_grad else None
            gb = -g if b.requires_grad else None
            return ga, gb

        tape.record("sub", (a, b), out, bwd)
    return out


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    _check_elementwise_shapes("hadamard", a, b, allow_row=False)
    out = Tensor._wrap(a.values * b.values)
    tape = _tape_for(a, b)
    if tape is not None:

        def bwd(g, a=a, b=b):
            ga = g * b.values if a.requires_grad else None
            gb = g * a.values if b.requires_grad else None
            return ga, gb

        tape.record("hadamard", (a, b), out, bwd)
    return out


_ELEMENTWISE = {"add": add, "sub": sub, "mul": hadamard, "hadamard": hadamard}


def elementwise(op: str, a: Tensor, b: Tensor) -> Tensor:
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise DomainError(f"unknown elementwise op {op!r}") from None
    return fn(a, b)


def scale(a: Tensor, k: float) -> Tensor:
    out = Tensor._wrap(a.values * k)
    tape = _tape_for(a)
    if tape is not None:
        tape.record("scale", (a,), out, lambda g, k=k: (g * k,))
    return out


def add_scalar(a: Tensor, k: float) -> Tensor:
    out = Tensor._wrap(a.values + k)
    tape = _tape_for(a)
    if tape is not None:
        tape.record("add_scalar", (a,), out, lambda g: (g,))
    return out


def sigmoid(a: Tensor) -> Tensor:
    y = kernels.sigmoid_fwd(a.values)
    out = Tensor._wrap(y)
    tape = _tape_for(a)
    if tape is not None:
        tape.record("sigmoid", (a,), out, lambda g, y=y: (kernels.sigmoid_bwd(y, g),))
    return out


def tanh(a: Tensor) -> Tensor:
    y = kernels.tanh_fwd(a.values)
    out = Tensor._wrap(y)
    tape = _tape_for(a)
    if tape is not None:
        tape.record("tanh", (a,), out, lambda g, y=y: (kernels.tanh_bwd(y, g),))
    return out


def relu(a: Tensor) -> Tensor:
    out = Tensor._wrap(kernels.relu_fwd(a.values))
    tape = _tape_for(a)
    if tape is not None:
        x = a.values
        tape.record("relu", (a,), out, lambda g, x=x: (kernels.relu_bwd(x, g),))
    return out


def leaky_relu(a: Tensor, slope: float = 0.01) -> Tensor:
    out = Tensor._wrap(kernels.leaky_relu_fwd(a.values, slope))
    tape = _tape_for(a)
    if tape is not None:
        x = a.values
        tape.record(
            "leaky_relu",
            (a,),
            out,
            lambda g, x=x, s=slope: (kernels.leaky_relu_bwd(x, g, s),),
        )
    return out


def identity(a: Tensor) -> Tensor:
    return a


_ACTIVATIONS: dict[str, Callable] = {
    "sigmoid": sigmoid,
    "tanh": tanh,
    "relu": relu,
    "leaky_relu": leaky_relu,
    "identity": identity,
}


def activation(kind: str, a: Tensor, slope: float = 0.01) -> Tensor:
    if kind == "leaky_relu":
        return leaky_relu(a, slope)
    try:
        fn = _ACTIVATIONS[kind]
    except KeyError:
        raise DomainError(f"unknown activation {kind!r}") from None
    return fn(a)


def softmax_rows(a: Tensor) -> Tensor:
    y = kernels.softmax_rows_fwd(a.values)
    out = Tensor._wrap(y)
    tape = _tape_for(a)
    if tape is not None:
        tape.record(
            "softmax_rows", (a,), out, lambda g, y=y: (kernels.softmax_rows_bwd(y, g),)
        )
    return out


def reduce(kind: str, a: Tensor) -> Tensor:
    """Scalar reduction to a 1x1 tensor: sum, mean, mean_abs or mean_sq.

    mean_abs uses subgradient 0 at exactly 0.
    """
    if a.values.size == 0:
        raise DomainError("reduce on empty tensor")
    x = a.values
    n = x.size
    if kind == "sum":
        val = x.sum()
    elif kind == "mean":
        val = x.mean()
    elif kind == "mean_abs":
        val = np.abs(x).mean()
    elif kind == "mean_sq":
        val = (x * x).mean()
    else:
        raise DomainError(f"unknown reduction {kind!r}")
    out = Tensor._wrap(np.array([[val]]))
    tape = _tape_for(a)
    if tape is not None:

        def bwd(g, x=x, kind=kind, n=n):
            gs = g[0, 0]
            if kind == "sum":
                gx = np.full(x.shape, gs)
            elif kind == "mean":
                gx = np.full(x.shape, gs / n)
            elif kind == "mean_abs":
                gx = np.sign(x) * (gs / n)
            else:  # mean_sq
                gx = x * (2.0 * gs / n)
            return (gx,)

        tape.record(f"reduce_{kind}", (a,), out, bwd)
    return out


def mul_colvec(a: Tensor, v: Tensor) -> Tensor:
    """Scale each row i of ``a`` by the scalar v[i, 0]."""
    if v.cols != 1 or v.rows != a.rows:
        raise ShapeError(f"mul_colvec: need {a.rows}x1 column, got {v.shape}")
    out = Tensor._wrap(a.values * v.values)
    tape = _tape_for(a, v)
    if tape is not None:

        def bwd(g, a=a, v=v):
            ga = g * v.values if a.requires_grad else None
            gv = (g * a.values).sum(axis=1, keepdims=True) if v.requires_grad else None
            return ga, gv

        tape.record("mul_colvec", (a, v), out, bwd)
    return out


def concat_cols(*tensors: Tensor) -> Tensor:
    if not tensors:
        raise DomainError("concat_cols of nothing")
    rows = tensors[0].rows
    for t in tensors:
        if t.rows != rows:
            raise ShapeError("concat_cols: row counts differ")
    out = Tensor._wrap(np.concatenate([t.values for t in tensors], axis=1))
    tape = _tape_for(*tensors)
    if tape is not None:
        widths = [t.cols for t in tensors]

        def bwd(g, tensors=tensors, widths=widths):
            grads = []
            j = 0
            for t, w in zip(tensors, widths):
                grads.append(g[:, j : j + w] if t.requires_grad else None)
                j += w
            return tuple(grads)

        tape.record("concat_cols", tensors, out, bwd)
    return out


def slice_cols(a: Tensor, j0: int, j1: int) -> Tensor:
    if not (0 <= j0 < j1 <= a.cols):
        raise ShapeError(f"slice_cols [{j0}:{j1}] out of range for {a.shape}")
    out = Tensor._wrap(np.ascontiguousarray(a.values[:, j0:j1]))
    tape = _tape_for(a)
    if tape is not None:

        def bwd(g, a=a, j0=j0, j1=j1):
            gx = np.zeros_like(a.values)
            gx[:, j0:j1] = g
            return (gx,)

        tape.record("slice_cols", (a,), out, bwd)
    return out


def gather_rows(a: Tensor, idx: np.ndarray) -> Tensor:
    """Row gather: out[i] = a[idx[i]]. Backward scatter-adds."""
    idx = np.ascontiguousarray(idx, dtype=np.int64)
    out = Tensor._wrap(kernels.gather_rows_fwd(a.values, idx))
    tape = _tape_for(a)
    if tape is not None:
        n_rows = a.rows
        tape.record(
            "gather_rows",
            (a,),
            out,
            lambda g, idx=idx, n=n_rows: (kernels.gather_rows_bwd(g, idx, n),),
        )
    return out


def reshape(a: Tensor, rows: int, cols: int) -> Tensor:
    if rows * cols != a.values.size:
        raise ShapeError(f"reshape {a.shape} -> ({rows}, {cols}) changes size")
    out = Tensor._wrap(a.values.reshape(rows, cols).copy())
    tape = _tape_for(a)
    if tape is not None:
        shp = a.shape
        tape.record("reshape", (a,), out, lambda g, shp=shp: (g.reshape(shp),))
    return out


def block_mean(a: Tensor, block: int) -> Tensor:
    """Mean over each consecutive block of ``block`` rows and all columns."""
    if block < 1 or a.rows % block != 0:
        raise ShapeError(f"block_mean: {a.rows} rows not divisible into {block}-row blocks")
    out = Tensor._wrap(kernels.block_mean_fwd(a.values, block))
    tape = _tape_for(a)
    if tape is not None:
        rows, cols = a.shape
        tape.record(
            "block_mean",
            (a,),
            out,
            lambda g, b=block, r=rows, c=cols: (kernels.block_mean_bwd(g, b, r, c),),
        )
    return out


def block_matmul(a: Tensor, x: Tensor, block: int) -> Tensor:
    """Blockwise product of stacked square blocks of ``a`` with stacked blocks of ``x``."""
    if a.cols != block or a.rows % block != 0:
        raise ShapeError(f"block_matmul: a {a.shape} is not a stack of {block}x{block} blocks")
    if x.rows != a.rows:
        raise ShapeError(f"block_matmul: x has {x.rows} rows, expected {a.rows}")
    out = Tensor._wrap(kernels.block_matmul_fwd(a.values, x.values, block))
    tape = _tape_for(a, x)
    if tape is not None:

        def bwd(g, a=a, x=x, n=block):
            ga = kernels.block_matmul_bwd_a(g, x.values, n) if a.requires_grad else None
            gx = kernels.block_matmul_bwd_x(a.values, g, n) if x.requires_grad else None
            return ga, gx

        tape.record("block_matmul", (a, x), out, bwd)
    return out


def normalize_adjacency_blocks(a: Tensor, block: int) -> Tensor:
    """Degree normalization with self-loops of stacked square blocks.

    Per block A: with Ahat = A + I and Dhat_ii = sum_j Ahat_ij, returns
    Dhat^-1/2 Ahat Dhat^-1/2, applied to the (possibly asymmetric) input
    exactly as written, without symmetrization.
    """
    if a.cols != block or a.rows % block != 0:
        raise ShapeError(
            f"normalize_adjacency: {a.shape} is not a stack of {block}x{block} blocks"
        )
    y, d = kernels.norm_adjacency_fwd(a.values, block)
    out = Tensor._wrap(y)
    tape = _tape_for(a)
    if tape is not None:
        av = a.values
        tape.record(
            "normalize_adjacency",
            (a,),
            out,
            lambda g, av=av, d=d, n=block: (kernels.norm_adjacency_bwd(av, d, g, n),),
        )
    return out
