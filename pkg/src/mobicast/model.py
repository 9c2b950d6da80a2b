"""Two-stream graph forecaster: assembly, single-step prediction, rollout.

The bottom stream runs a shared GRU over per-node mobility features; its
hidden states feed (a) a pairwise adjacency generator producing one learned
directed edge matrix per day, and (b) attention pooling plus an MLP decoder
that predicts the next day's mobility matrix. The top stream applies
stacked graph convolutions with those learned edges to the case features of
each day, encodes the sequence with a GRU, pools with attention, and
decodes the next day's cases.

Everything here runs batched: B windows are stacked as (B*N)-row matrices
and per-graph operations use the block ops from diffcore. A single-sample
forward is the B=1 case of the same code path, which is what makes
`rollout(horizon=1)` bit-identical to `forward`.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from datetime import date, timedelta
from typing import Callable, Sequence

import numpy as np

from . import diffcore as dc
from . import features as ft
from . import layers as ly
from .diffcore import Tensor
from .errors import ContractError

EDGE_MODES = ("learned", "mobility")

# transform applied to a raw mobility matrix dated d before it enters a window
MobilityTransform = Callable[[np.ndarray, date], np.ndarray]


@dataclass(frozen=True)
class ModelConfig:
    n_regions: int
    window: int
    case_dim: int = 3
    gcn_dims: tuple[int, ...] = (32, 32)
    hidden_case: int = 32
    hidden_mob: int = 32
    attn_dim: int = 16
    adj_hidden: tuple[int, ...] = (32, 32)
    dec_hidden: int = 32
    edge_mode: str = "learned"
    attention_enabled: bool = True
    leaky_slope: float = 0.01

    def __post_init__(self):
        if self.edge_mode not in EDGE_MODES:
            raise ContractError(f"edge_mode must be one of {EDGE_MODES}, got {self.edge_mode!r}")
        if self.n_regions < 2:
            raise ContractError("n_regions must be >= 2")
        if self.window < 1:
            raise ContractError("window must be >= 1")

    @property
    def mob_dim(self) -> int:
        # mobility row (N) + cumulative cases (1) + weekday one-hot (7)
        return self.n_regions + 8

    def to_dict(self) -> dict:
        return {
            "n_regions": self.n_regions,
            "window": self.window,
            "case_dim": self.case_dim,
            "gcn_dims": list(self.gcn_dims),
            "hidden_case": self.hidden_case,
            "hidden_mob": self.hidden_mob,
            "attn_dim": self.attn_dim,
            "adj_hidden": list(self.adj_hidden),
            "dec_hidden": self.dec_hidden,
            "edge_mode": self.edge_mode,
            "attention_enabled": self.attention_enabled,
            "leaky_slope": self.leaky_slope,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["gcn_dims"] = tuple(d["gcn_dims"])
        d["adj_hidden"] = tuple(d["adj_hidden"])
        return cls(**d)


@dataclass
class ModelParams:
    """Every learnable weight of both streams plus the model configuration."""

    config: ModelConfig
    gcn_layers: list[ly.GcnLayer]
    gru_case: ly.GruCell
    attn_case: ly.AttentionHead
    dec_case: ly.Mlp
    gru_mob: ly.GruCell
    attn_mob: ly.AttentionHead
    dec_mob: ly.Mlp
    adj_gen: ly.Mlp

    def named_tensors(self) -> dict[str, Tensor]:
        """Stable name -> tensor map; iteration order is the checkpoint order."""
        out: dict[str, Tensor] = {}
        for i, layer in enumerate(self.gcn_layers):
            out[f"gcn{i}.weight"] = layer.weight
        for prefix, cell in (("gru_case", self.gru_case), ("gru_mob", self.gru_mob)):
            for gate in ("z", "r", "h"):
                out[f"{prefix}.u_{gate}"] = getattr(cell, f"u_{gate}")
                out[f"{prefix}.w_{gate}"] = getattr(cell, f"w_{gate}")
                out[f"{prefix}.b_{gate}"] = getattr(cell, f"b_{gate}")
        for prefix, head in (("attn_case", self.attn_case), ("attn_mob", self.attn_mob)):
            out[f"{prefix}.w1"] = head.w1
            out[f"{prefix}.b1"] = head.b1
            out[f"{prefix}.w2"] = head.w2
            out[f"{prefix}.b2"] = head.b2
        for prefix, net in (
            ("dec_case", self.dec_case),
            ("dec_mob", self.dec_mob),
            ("adj_gen", self.adj_gen),
        ):
            for i, blk in enumerate(net.blocks):
                out[f"{prefix}.{i}.weight"] = blk.weight
                out[f"{prefix}.{i}.bias"] = blk.bias
        return out


def init_params(config: ModelConfig, seed: int) -> ModelParams:
    """Deterministic initialization; weights are Glorot-uniform, biases zero."""
    rng = np.random.default_rng(seed)

    gcn_layers = []
    d_in = config.case_dim
    for d_out in config.gcn_dims:
        gcn_layers.append(ly.make_gcn_layer(rng, d_in, d_out, activation="relu"))
        d_in = d_out

    gru_case = ly.make_gru_cell(rng, d_in, config.hidden_case)
    attn_case = ly.make_attention_head(rng, config.hidden_case, config.attn_dim)
    dec_case = ly.make_mlp(
        rng, [config.hidden_case, config.dec_hidden, 1], hidden_activation="leaky_relu"
    )
    gru_mob = ly.make_gru_cell(rng, config.mob_dim, config.hidden_mob)
    attn_mob = ly.make_attention_head(rng, config.hidden_mob, config.attn_dim)
    dec_mob = ly.make_mlp(
        rng,
        [config.hidden_mob, config.dec_hidden, config.n_regions],
        hidden_activation="leaky_relu",
    )
    adj_gen = ly.make_mlp(
        rng,
        [2 * config.hidden_mob, *config.adj_hidden, 1],
        hidden_activation="leaky_relu",
        terminal_activation="sigmoid",
    )
    return ModelParams(
        config=config,
        gcn_layers=gcn_layers,
        gru_case=gru_case,
        attn_case=attn_case,
        dec_case=dec_case,
        gru_mob=gru_mob,
        attn_mob=attn_mob,
        dec_mob=dec_mob,
        adj_gen=adj_gen,
    )


# ---------------------------------------------------------------------------
# inputs and outputs


@dataclass
class StepInput:
    """One K-day window in both normalized (model) and raw (bookkeeping) form.

    ``mobility_window`` holds the raw nonnegative matrices; normalized
    mobility enters the model only through ``mobility_features``.
    """

    case_features: list[np.ndarray]  # K x (N, 3), normalized
    mobility_window: list[np.ndarray]  # K x (N, N), raw
    mobility_features: list[np.ndarray]  # K x (N, N+8), normalized
    raw_daily: np.ndarray  # (K, N)
    raw_cum: np.ndarray  # (K, N)
    population: np.ndarray  # (N,)
    dates: list[date]  # K entries, consecutive
    stats: ft.NormalizationStats

    @property
    def k(self) -> int:
        return len(self.dates)

    @property
    def n(self) -> int:
        return self.population.shape[0]

    def validate(self) -> None:
        if np.any(self.raw_daily < 0) or np.any(self.raw_cum < 0):
            raise ContractError("window has negative case counts")
        if np.any(np.diff(self.raw_cum, axis=0) < -1e-9):
            raise ContractError("cumulative cases decrease within window")
        for m in self.mobility_window:
            if np.any(m < 0):
                raise ContractError("window has negative mobility")
        for f in self.mobility_features:
            onehot = f[:, self.n + 1 :]
            if onehot.shape[1] != 7 or not np.allclose(onehot.sum(axis=1), 1.0):
                raise ContractError("weekday encoding is not a valid one-hot of width 7")
        for a, b in zip(self.dates, self.dates[1:]):
            if (b - a).days != 1:
                raise ContractError("window dates are not consecutive")


def make_step_input(
    raw_daily: np.ndarray,
    raw_cum: np.ndarray,
    mobility: Sequence[np.ndarray],
    population: np.ndarray,
    dates: Sequence[date],
    stats: ft.NormalizationStats,
) -> StepInput:
    """Build a validated StepInput, deriving the normalized features."""
    k = len(dates)
    case_features = [
        ft.day_case_features(raw_daily[t], raw_cum[t], population, stats) for t in range(k)
    ]
    mobility_features = [
        ft.day_mobility_features(mobility[t], raw_cum[t], dates[t], stats) for t in range(k)
    ]
    step = StepInput(
        case_features=case_features,
        mobility_window=[np.asarray(m, dtype=np.float64) for m in mobility],
        mobility_features=mobility_features,
        raw_daily=np.asarray(raw_daily, dtype=np.float64),
        raw_cum=np.asarray(raw_cum, dtype=np.float64),
        population=np.asarray(population, dtype=np.float64),
        dates=list(dates),
        stats=stats,
    )
    step.validate()
    return step


@dataclass
class StepOutput:
    """One-day prediction. Normalized-space heads plus clamped raw values."""

    date: date
    cases_next: np.ndarray  # (N,), normalized space
    mobility_next: np.ndarray  # (N, N), normalized space
    cases_next_raw: np.ndarray  # (N,), denormalized, clamped >= 0
    mobility_next_raw: np.ndarray  # (N, N), denormalized, clamped >= 0
    adjacency_seq: list[np.ndarray]  # K x (N, N) edges fed to the GCN
    attention_case: np.ndarray  # (K,), sums to 1
    attention_mob: np.ndarray  # (K,), sums to 1


# ---------------------------------------------------------------------------
# batched core


@dataclass
class PreparedBatch:
    """Stacked model inputs for B windows (plain arrays, reusable across epochs)."""

    batch: int
    n: int
    k: int
    case_x: list[np.ndarray]  # K x (B*N, 3)
    mob_x: list[np.ndarray]  # K x (B*N, N+8)
    adj_fixed: list[np.ndarray] | None  # K x (B*N, N) when edge_mode=mobility
    pair_i: np.ndarray  # (B*N*N,) gather index of source-node hidden rows
    pair_j: np.ndarray  # (B*N*N,) gather index of destination-node hidden rows
    rep_idx: np.ndarray  # (B*N,) expands one row per window to N rows


def prepare_batch(inputs: Sequence[StepInput], config: ModelConfig) -> PreparedBatch:
    if not inputs:
        raise ContractError("prepare_batch: empty batch")
    n, k = config.n_regions, config.window
    for s in inputs:
        if s.n != n or s.k != k:
            raise ContractError(
                f"window shape ({s.k} days, {s.n} regions) does not match "
                f"model config ({k} days, {n} regions)"
            )
        if s.case_features[0].shape[1] != config.case_dim:
            raise ContractError("case feature dimension mismatch")
        if s.mobility_features[0].shape[1] != config.mob_dim:
            raise ContractError("mobility feature dimension mismatch")
    b = len(inputs)
    case_x = [np.vstack([s.case_features[t] for s in inputs]) for t in range(k)]
    mob_x = [np.vstack([s.mobility_features[t] for s in inputs]) for t in range(k)]
    adj_fixed = None
    if config.edge_mode == "mobility":
        adj_fixed = []
        scales = []
        for s in inputs:
            peak = max(float(m.max()) for m in s.mobility_window)
            scales.append(1.0 / peak if peak > 0 else 1.0)
        for t in range(k):
            adj_fixed.append(
                np.vstack([s.mobility_window[t] * sc for s, sc in zip(inputs, scales)])
            )
    base = np.arange(b, dtype=np.int64) * n
    pair_i = (base[:, None] + np.repeat(np.arange(n, dtype=np.int64), n)[None, :]).ravel()
    pair_j = (base[:, None] + np.tile(np.arange(n, dtype=np.int64), n)[None, :]).ravel()
    rep_idx = np.repeat(np.arange(b, dtype=np.int64), n)
    return PreparedBatch(b, n, k, case_x, mob_x, adj_fixed, pair_i, pair_j, rep_idx)


@dataclass
class CoreOutput:
    pred_cases: Tensor  # (B*N, 1)
    pred_mobility: Tensor  # (B*N, N)
    adjacency: list[Tensor]  # K x (B*N, N)
    attn_case: np.ndarray  # (B, K)
    attn_mob: np.ndarray  # (B, K)


def generate_adjacency(
    params: ModelParams, bottom_hidden_seq: Sequence[Tensor]
) -> list[Tensor]:
    """Learned edges for one graph: A_t[i, j] = sigmoid-MLP([h_i, h_j])."""
    n = bottom_hidden_seq[0].rows
    pair_i = np.repeat(np.arange(n, dtype=np.int64), n)
    pair_j = np.tile(np.arange(n, dtype=np.int64), n)
    return _generate_adjacency_blocks(params, bottom_hidden_seq, n, pair_i, pair_j)


def _generate_adjacency_blocks(
    params: ModelParams,
    hidden_seq: Sequence[Tensor],
    n: int,
    pair_i: np.ndarray,
    pair_j: np.ndarray,
) -> list[Tensor]:
    slope = params.config.leaky_slope
    out = []
    for h in hidden_seq:
        pairs = dc.concat_cols(dc.gather_rows(h, pair_i), dc.gather_rows(h, pair_j))
        edges = ly.mlp_forward(params.adj_gen, pairs, slope)  # (B*N*N, 1) in (0,1)
        out.append(dc.reshape(edges, h.rows, n))
    return out


def _forward_core(params: ModelParams, prep: PreparedBatch) -> CoreOutput:
    cfg = params.config
    n, k, b = prep.n, prep.k, prep.batch
    rows = b * n

    # bottom stream: shared GRU over per-node mobility features
    h = Tensor(np.zeros((rows, cfg.hidden_mob)))
    hs_mob: list[Tensor] = []
    for t in range(k):
        h = ly.gru_step(params.gru_mob, Tensor(prep.mob_x[t]), h)
        hs_mob.append(h)

    if cfg.edge_mode == "learned":
        adjacency = _generate_adjacency_blocks(params, hs_mob, n, prep.pair_i, prep.pair_j)
    else:
        adjacency = [Tensor(a) for a in prep.adj_fixed]

    # top stream: stacked GCNs per day, then GRU over the encoded sequence
    hc = Tensor(np.zeros((rows, cfg.hidden_case)))
    hs_case: list[Tensor] = []
    for t in range(k):
        x = Tensor(prep.case_x[t])
        for layer in params.gcn_layers:
            x = ly.gcn_forward_blocks(layer, x, adjacency[t], n)
        hc = ly.gru_step(params.gru_case, x, hc)
        hs_case.append(hc)

    if cfg.attention_enabled:
        ctx_case, w_case = ly.attention_pool(params.attn_case, hs_case, n, prep.rep_idx)
        ctx_mob, w_mob = ly.attention_pool(params.attn_mob, hs_mob, n, prep.rep_idx)
        attn_case = w_case.values.copy()
        attn_mob = w_mob.values.copy()
    else:
        ctx_case, ctx_mob = hs_case[-1], hs_mob[-1]
        onehot = np.zeros((b, k))
        onehot[:, -1] = 1.0
        attn_case = onehot
        attn_mob = onehot.copy()

    pred_cases = ly.mlp_forward(params.dec_case, ctx_case, cfg.leaky_slope)
    pred_mobility = ly.mlp_forward(params.dec_mob, ctx_mob, cfg.leaky_slope)
    return CoreOutput(pred_cases, pred_mobility, adjacency, attn_case, attn_mob)


# ---------------------------------------------------------------------------
# public single-step forward and rollout


def forward(params: ModelParams, step: StepInput) -> StepOutput:
    prep = prepare_batch([step], params.config)
    core = _forward_core(params, prep)
    n = params.config.n_regions
    stats = step.stats
    cases_z = core.pred_cases.values[:, 0].copy()
    mob_z = core.pred_mobility.values.copy()
    cases_raw = np.maximum(stats.denormalize("daily", cases_z), 0.0)
    mob_raw = np.maximum(stats.denormalize("mob", mob_z), 0.0)
    return StepOutput(
        date=step.dates[-1] + timedelta(days=1),
        cases_next=cases_z,
        mobility_next=mob_z,
        cases_next_raw=cases_raw,
        mobility_next_raw=mob_raw,
        adjacency_seq=[a.values[:n].copy() for a in core.adjacency],
        attention_case=core.attn_case[0],
        attention_mob=core.attn_mob[0],
    )


def transform_window(step: StepInput, transform: MobilityTransform) -> StepInput:
    """Apply a dated mobility transform to the matrices already in a window.

    Days the transform leaves alone keep their original arrays and features
    bit-for-bit; touched days get their mobility features rebuilt.
    """
    new_mob: list[np.ndarray] = []
    new_feat: list[np.ndarray] = []
    changed = False
    for t, d in enumerate(step.dates):
        w = step.mobility_window[t]
        w2 = transform(w, d)
        if w2 is w:
            new_mob.append(w)
            new_feat.append(step.mobility_features[t])
        else:
            changed = True
            new_mob.append(w2)
            new_feat.append(ft.day_mobility_features(w2, step.raw_cum[t], d, step.stats))
    if not changed:
        return step
    return replace(step, mobility_window=new_mob, mobility_features=new_feat)


def advance_window(
    step: StepInput, out: StepOutput, transform: MobilityTransform | None = None
) -> StepInput:
    """Slide the window one day forward, ingesting the model's own prediction.

    Cumulative cases are re-accumulated in raw space and renormalized, the
    weekday advances with the calendar, population stays fixed.
    """
    next_date = step.dates[-1] + timedelta(days=1)
    daily_raw = out.cases_next_raw
    mob_raw = out.mobility_next_raw
    if transform is not None:
        mob_raw = transform(mob_raw, next_date)
    cum_raw = step.raw_cum[-1] + daily_raw

    case_feat = ft.day_case_features(daily_raw, cum_raw, step.population, step.stats)
    mob_feat = ft.day_mobility_features(mob_raw, cum_raw, next_date, step.stats)
    return StepInput(
        case_features=step.case_features[1:] + [case_feat],
        mobility_window=step.mobility_window[1:] + [mob_raw],
        mobility_features=step.mobility_features[1:] + [mob_feat],
        raw_daily=np.vstack([step.raw_daily[1:], daily_raw]),
        raw_cum=np.vstack([step.raw_cum[1:], cum_raw]),
        population=step.population,
        dates=step.dates[1:] + [next_date],
        stats=step.stats,
    )


def rollout(
    params: ModelParams,
    seed_window: StepInput,
    horizon: int,
    mobility_transform: MobilityTransform | None = None,
) -> list[StepOutput]:
    """Autoregressive multi-day forecast.

    Each step predicts day K+1, then the prediction (clamped nonnegative in
    raw space) is appended to the window and the oldest day dropped. When a
    mobility transform is given it is applied both to the seed window's
    matrices and to every predicted matrix before re-ingestion, so a policy
    persists instead of fading after K days.
    """
    if horizon < 1:
        raise ContractError(f"rollout horizon must be >= 1, got {horizon}")
    window = seed_window
    if mobility_transform is not None:
        window = transform_window(window, mobility_transform)
    outputs: list[StepOutput] = []
    for _ in range(horizon):
        out = forward(params, window)
        outputs.append(out)
        window = advance_window(window, out, mobility_transform)
    return outputs
