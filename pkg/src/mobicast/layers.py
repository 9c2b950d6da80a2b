"""Neural building blocks: graph convolution, GRU cell, attention pooling, MLPs.

All forward functions are written row-wise, so a matrix holding one graph's
nodes and a matrix holding many stacked graphs go through the same code.
Only the graph-structured pieces (adjacency normalization, neighbor
aggregation, per-graph score averaging) need an explicit block size; they
accept one and default to "the whole matrix is one graph".
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import diffcore as dc
from .diffcore import Tensor
from .errors import DomainError, ShapeError

LEAKY_SLOPE_DEFAULT = 0.01


@dataclass
class GcnLayer:
    """One graph-convolution layer: X_new = act(norm(A) @ X @ W)."""

    weight: Tensor
    activation: str = "relu"


@dataclass
class GruCell:
    """Gated recurrent unit, update/reset/candidate form.

    z = sig(x U_z + h W_z + b_z); r = sig(x U_r + h W_r + b_r)
    cand = tanh(x U_h + (r * h) W_h + b_h); h_new = (1 - z) * h + z * cand
    """

    u_z: Tensor
    w_z: Tensor
    b_z: Tensor
    u_r: Tensor
    w_r: Tensor
    b_r: Tensor
    u_h: Tensor
    w_h: Tensor
    b_h: Tensor

    @property
    def input_dim(self) -> int:
        return self.u_z.rows

    @property
    def hidden_dim(self) -> int:
        return self.u_z.cols


@dataclass
class AttentionHead:
    """Two linear maps with tanh between; emits one scalar score per step."""

    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor


@dataclass
class LinearBlock:
    weight: Tensor
    bias: Tensor
    activation: str = "identity"


@dataclass
class Mlp:
    blocks: list[LinearBlock] = field(default_factory=list)

    @property
    def input_dim(self) -> int:
        return self.blocks[0].weight.rows

    @property
    def output_dim(self) -> int:
        return self.blocks[-1].weight.cols


# ---------------------------------------------------------------------------
# initialization


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> Tensor:
    lim = float(np.sqrt(6.0 / (fan_in + fan_out)))
    return Tensor(rng.uniform(-lim, lim, size=(fan_in, fan_out)), requires_grad=True)


def make_gcn_layer(
    rng: np.random.Generator, d_in: int, d_out: int, activation: str = "relu"
) -> GcnLayer:
    return GcnLayer(weight=glorot_uniform(rng, d_in, d_out), activation=activation)


def make_gru_cell(rng: np.random.Generator, d_in: int, hidden: int) -> GruCell:
    def u():
        return glorot_uniform(rng, d_in, hidden)

    def w():
        return glorot_uniform(rng, hidden, hidden)

    def b():
        return Tensor(np.zeros((1, hidden)), requires_grad=True)

    return GruCell(u(), w(), b(), u(), w(), b(), u(), w(), b())


def make_attention_head(
    rng: np.random.Generator, hidden: int, attn_dim: int
) -> AttentionHead:
    return AttentionHead(
        w1=glorot_uniform(rng, hidden, attn_dim),
        b1=Tensor(np.zeros((1, attn_dim)), requires_grad=True),
        w2=glorot_uniform(rng, attn_dim, 1),
        b2=Tensor(np.zeros((1, 1)), requires_grad=True),
    )


def make_mlp(
    rng: np.random.Generator,
    dims: Sequence[int],
    hidden_activation: str = "leaky_relu",
    terminal_activation: str = "identity",
) -> Mlp:
    if len(dims) < 2:
        raise DomainError("Mlp needs at least input and output dims")
    blocks = []
    for i in range(len(dims) - 1):
        act = terminal_activation if i == len(dims) - 2 else hidden_activation
        blocks.append(
            LinearBlock(
                weight=glorot_uniform(rng, dims[i], dims[i + 1]),
                bias=Tensor(np.zeros((1, dims[i + 1])), requires_grad=True),
                activation=act,
            )
        )
    return Mlp(blocks)


# ---------------------------------------------------------------------------
# forward passes


def normalize_adjacency(a: Tensor) -> Tensor:
    """Self-loop degree normalization Dhat^-1/2 (A+I) Dhat^-1/2 of one square matrix."""
    if a.rows != a.cols:
        raise ShapeError(f"normalize_adjacency: matrix must be square, got {a.shape}")
    if np.any(a.values < 0):
        raise DomainError("normalize_adjacency: negative edge weight")
    return dc.normalize_adjacency_blocks(a, a.rows)


def gcn_forward(layer: GcnLayer, x: Tensor, a: Tensor) -> Tensor:
    """Eq-style graph convolution on one graph; ``a`` is raw (normalized here)."""
    return gcn_forward_blocks(layer, x, a, a.rows)


def gcn_forward_blocks(layer: GcnLayer, x: Tensor, a: Tensor, block: int) -> Tensor:
    if x.rows != a.rows:
        raise ShapeError(f"gcn_forward: features {x.shape} vs adjacency {a.shape}")
    if x.cols != layer.weight.rows:
        raise ShapeError(
            f"gcn_forward: feature dim {x.cols} does not match weight {layer.weight.shape}"
        )
    norm = dc.normalize_adjacency_blocks(a, block)
    agg = dc.block_matmul(norm, x, block)
    return dc.activation(layer.activation, dc.matmul(agg, layer.weight))


def gru_step(cell: GruCell, x_t: Tensor, h_prev: Tensor) -> Tensor:
    if x_t.cols != cell.input_dim or h_prev.cols != cell.hidden_dim:
        raise ShapeError(
            f"gru_step: x {x_t.shape}, h {h_prev.shape} vs cell "
            f"({cell.input_dim} -> {cell.hidden_dim})"
        )
    if x_t.rows != h_prev.rows:
        raise ShapeError("gru_step: x and h row counts differ")
    z = dc.sigmoid(dc.add(dc.add(dc.matmul(x_t, cell.u_z), dc.matmul(h_prev, cell.w_z)), cell.b_z))
    r = dc.sigmoid(dc.add(dc.add(dc.matmul(x_t, cell.u_r), dc.matmul(h_prev, cell.w_r)), cell.b_r))
    cand = dc.tanh(
        dc.add(
            dc.add(dc.matmul(x_t, cell.u_h), dc.matmul(dc.hadamard(r, h_prev), cell.w_h)),
            cell.b_h,
        )
    )
    one_minus_z = dc.add_scalar(dc.scale(z, -1.0), 1.0)
    return dc.add(dc.hadamard(one_minus_z, h_prev), dc.hadamard(z, cand))


def attention_pool(
    head: AttentionHead,
    hs: Sequence[Tensor],
    block: int | None = None,
    expand_idx: np.ndarray | None = None,
) -> tuple[Tensor, Tensor]:
    """Softmax-weighted sum over per-step hidden states.

    Per step, the score is the mean over nodes and units of a
    linear -> tanh -> linear map of the hidden state. Returns the pooled
    context and the weights (one row per graph) for inspection.
    """
    if len(hs) == 0:
        raise DomainError("attention_pool: empty sequence")
    rows = hs[0].rows
    if block is None:
        block = rows
    scores = []
    for h in hs:
        s = dc.add(dc.matmul(dc.tanh(dc.add(dc.matmul(h, head.w1), head.b1)), head.w2), head.b2)
        scores.append(dc.block_mean(s, block))
    weights = dc.softmax_rows(dc.concat_cols(*scores))
    if expand_idx is None:
        expand_idx = np.repeat(np.arange(rows // block, dtype=np.int64), block)
    context = None
    for t, h in enumerate(hs):
        w_t = dc.gather_rows(dc.slice_cols(weights, t, t + 1), expand_idx)
        term = dc.mul_colvec(h, w_t)
        context = term if context is None else dc.add(context, term)
    return context, weights


def mlp_forward(net: Mlp, x: Tensor, slope: float = LEAKY_SLOPE_DEFAULT) -> Tensor:
    if x.cols != net.input_dim:
        raise ShapeError(f"mlp_forward: input dim {x.cols}, expected {net.input_dim}")
    for blk in net.blocks:
        x = dc.activation(blk.activation, dc.add(dc.matmul(x, blk.weight), blk.bias), slope)
    return x
