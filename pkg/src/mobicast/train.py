"""Multitask loss, RMSProp with stepped decay, the fit loop, MAE evaluation.

Training follows the reference recipe: 150 epochs of RMSProp at 1e-3 with a
10% decay every 10 epochs, loss = w1*MAE(cases) + w2*MSE(cases) +
w3*MSE(mobility) computed in normalized space, gradients clipped to a
global norm before each update. Every epoch takes one full-batch step over
all training windows (the panel is small), which keeps runs bit-reproducible
for a fixed (seed, config, data) triple.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from datetime import date, timedelta
from decimal import Decimal
from pathlib import Path

import numpy as np

from . import data as dt
from . import diffcore as dc
from . import model as md
from .diffcore import Tensor
from .errors import ContractError, DivergenceError, DomainError, ShapeError
from .features import NormalizationStats

logger = logging.getLogger(__name__)

RMSPROP_RHO = 0.99
RMSPROP_EPS = 1e-8


@dataclass
class TrainConfig:
    epochs: int = 150
    base_lr: float = 1e-3
    decay_every: int = 10
    decay_factor: float = 0.9
    w1: float = 1.0
    w2: float = 1.0
    w3: float = 0.5
    window: int = 15
    seed: int = 0
    clip_norm: float = 5.0
    edge_mode: str = "learned"
    attention_enabled: bool = True
    val_fraction: float = 0.1
    # chronological fixed-order mini-batches; None trains full-batch.
    # either way every epoch sees every window and runs are bit-reproducible
    batch_size: int | None = 32

    def __post_init__(self):
        if self.epochs < 1:
            raise ContractError("epochs must be >= 1")
        if self.window < 1:
            raise ContractError("window must be >= 1")
        if min(self.w1, self.w2, self.w3) < 0:
            raise ContractError("loss weights must be nonnegative")
        if self.decay_every < 1:
            raise ContractError("decay_every must be >= 1")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ContractError("val_fraction must be in [0, 1)")
        if self.batch_size is not None and self.batch_size < 1:
            raise ContractError("batch_size must be >= 1 or None")


def multitask_loss(
    pred_cases: Tensor,
    true_cases: Tensor,
    pred_mobility: Tensor,
    true_mobility: Tensor,
    w1: float,
    w2: float,
    w3: float,
) -> Tensor:
    """w1*MAE(cases) + w2*MSE(cases) + w3*MSE(mobility), a 1x1 tensor."""
    if pred_cases.shape != true_cases.shape:
        raise ShapeError(
            f"case shapes differ: {pred_cases.shape} vs {true_cases.shape}"
        )
    if pred_mobility.shape != true_mobility.shape:
        raise ShapeError(
            f"mobility shapes differ: {pred_mobility.shape} vs {true_mobility.shape}"
        )
    rc = dc.sub(pred_cases, true_cases)
    rm = dc.sub(pred_mobility, true_mobility)
    loss = dc.add(
        dc.scale(dc.reduce("mean_abs", rc), w1),
        dc.scale(dc.reduce("mean_sq", rc), w2),
    )
    return dc.add(loss, dc.scale(dc.reduce("mean_sq", rm), w3))


def lr_at(epoch: int, config: TrainConfig) -> float:
    """Stepped decay: base_lr * decay_factor ** floor(epoch / decay_every).

    Evaluated in decimal so the published schedule values (1e-3, 9e-4,
    8.1e-4, ...) come out exact instead of drifting by float ulps.
    """
    if epoch < 0:
        raise DomainError("epoch must be >= 0")
    steps = epoch // config.decay_every
    return float(
        Decimal(repr(config.base_lr)) * Decimal(repr(config.decay_factor)) ** steps
    )


class RmsPropState:
    """Per-parameter running mean of squared gradients."""

    def __init__(self, named: dict[str, Tensor], rho: float = RMSPROP_RHO, eps: float = RMSPROP_EPS):
        self.rho = rho
        self.eps = eps
        self.v = {name: np.zeros_like(t.values) for name, t in named.items()}


def clip_global_norm(named: dict[str, Tensor], max_norm: float) -> float:
    """Scale all gradients so their joint L2 norm is at most ``max_norm``."""
    total = 0.0
    for t in named.values():
        if t.grad is not None:
            total += float((t.grad * t.grad).sum())
    norm = math.sqrt(total)
    if norm > max_norm and norm > 0:
        factor = max_norm / norm
        for t in named.values():
            if t.grad is not None:
                t.grad *= factor
    return norm


def rmsprop_step(named: dict[str, Tensor], state: RmsPropState, lr: float) -> None:
    """v <- rho v + (1-rho) g^2 ; p <- p - lr * g / (sqrt(v) + eps)."""
    for name, t in named.items():
        g = t.grad
        if g is None:
            continue
        if not np.all(np.isfinite(g)):
            raise DivergenceError(f"non-finite gradient in parameter {name!r}")
        v = state.v[name]
        v *= state.rho
        v += (1.0 - state.rho) * g * g
        t.values -= lr * g / (np.sqrt(v) + state.eps)


@dataclass
class FitResult:
    params: md.ModelParams
    stats: NormalizationStats
    log: list[dict]  # epoch, lr, train_loss, val_loss
    best_epoch: int
    best_val_loss: float
    aborted_epoch: int | None = None  # set when divergence cut training short


def _batch_targets(samples: list[dt.WindowSample]) -> tuple[np.ndarray, np.ndarray]:
    y_case = np.concatenate([s.target_cases for s in samples]).reshape(-1, 1)
    y_mob = np.vstack([s.target_mobility for s in samples])
    return y_case, y_mob


def _eval_loss(params, prep, y_case, y_mob, cfg: TrainConfig) -> float:
    core = md._forward_core(params, prep)
    loss = multitask_loss(
        core.pred_cases, Tensor(y_case), core.pred_mobility, Tensor(y_mob),
        cfg.w1, cfg.w2, cfg.w3,
    )
    return loss.item()


def fit(
    panel: dt.PanelDataset,
    config: TrainConfig,
    model_config: md.ModelConfig | None = None,
) -> FitResult:
    """Train on a panel, returning the best-validation checkpoint.

    The window list is split chronologically (last ``val_fraction`` of
    windows held out for validation) and normalization statistics are
    computed only from the days the training windows touch.
    """
    k = config.window
    if panel.n_days <= k:
        raise DomainError(f"panel too short: {panel.n_days} days for window {k}")
    n_windows = panel.n_days - k
    n_val = int(n_windows * config.val_fraction)
    n_train = n_windows - n_val
    if n_train < 1:
        raise DomainError("no training windows after validation split")

    train_days = (n_train - 1) + k + 1  # days touched by training windows
    stats = dt.compute_stats(panel, train_days)
    samples = dt.build_windows(panel, k, stats)
    train_s, val_s = samples[:n_train], samples[n_train:]

    if model_config is None:
        model_config = md.ModelConfig(
            n_regions=panel.n_regions,
            window=k,
            edge_mode=config.edge_mode,
            attention_enabled=config.attention_enabled,
        )
    elif model_config.window != k or model_config.n_regions != panel.n_regions:
        raise ContractError("model_config disagrees with panel/train config")

    params = md.init_params(model_config, config.seed)
    named = params.named_tensors()
    state = RmsPropState(named)

    bs = config.batch_size or len(train_s)
    chunks = [train_s[i : i + bs] for i in range(0, len(train_s), bs)]
    batches = [
        (md.prepare_batch([s.input for s in chunk], model_config), *_batch_targets(chunk))
        for chunk in chunks
    ]
    have_val = len(val_s) > 0
    if have_val:
        prep_val = md.prepare_batch([s.input for s in val_s], model_config)
        yv_case, yv_mob = _batch_targets(val_s)

    log: list[dict] = []
    best_epoch, best_val = -1, math.inf
    best_snapshot: dict[str, np.ndarray] | None = None
    aborted: int | None = None

    for epoch in range(config.epochs):
        lr = lr_at(epoch, config)
        epoch_loss = 0.0
        try:
            for prep, y_case, y_mob in batches:
                with dc.Tape():
                    core = md._forward_core(params, prep)
                    loss = multitask_loss(
                        core.pred_cases, Tensor(y_case), core.pred_mobility, Tensor(y_mob),
                        config.w1, config.w2, config.w3,
                    )
                step_loss = loss.item()
                if not math.isfinite(step_loss):
                    raise DivergenceError(
                        f"training loss is {step_loss} at epoch {epoch + 1}"
                    )
                epoch_loss += step_loss * prep.batch
                dc.backward(loss)
                clip_global_norm(named, config.clip_norm)
                rmsprop_step(named, state, lr)
                for t in named.values():
                    t.zero_grad()
        except DivergenceError as e:
            logger.error("training diverged: %s; keeping last good checkpoint", e)
            aborted = epoch + 1
            for t in named.values():
                t.zero_grad()
            break
        train_loss = epoch_loss / len(train_s)

        val_loss = (
            _eval_loss(params, prep_val, yv_case, yv_mob, config) if have_val else train_loss
        )
        log.append(
            {"epoch": epoch + 1, "lr": lr, "train_loss": train_loss, "val_loss": val_loss}
        )
        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch + 1
            best_snapshot = {name: t.values.copy() for name, t in named.items()}

    if best_snapshot is None:
        raise DivergenceError("training never produced a finite checkpoint")
    for name, t in named.items():
        t.values = best_snapshot[name].copy()
    return FitResult(
        params=params,
        stats=stats,
        log=log,
        best_epoch=best_epoch,
        best_val_loss=best_val,
        aborted_epoch=aborted,
    )


# ---------------------------------------------------------------------------
# evaluation


@dataclass
class EvalRow:
    epiweek_start: date
    horizon_days: int
    model_mae: float
    persistence_mae: float
    skipped: str | None = None


def evaluate_mae(
    params: md.ModelParams,
    stats: NormalizationStats,
    panel: dt.PanelDataset,
    eval_start: date,
    eval_end: date,
    horizons: tuple[int, ...] = (14, 21),
) -> list[EvalRow]:
    """Per-epi-week MAE of weekly case totals, model vs persistence.

    For each complete epi-week inside the range and each horizon h, the
    model is seeded with the K days ending h days before the week's
    Saturday, rolled out h days, and its predicted dailies are summed over
    the target week. Persistence repeats the last observed 7-day total.
    """
    k = params.config.window
    rows: list[EvalRow] = []
    first_sunday = dt.epiweek_start(eval_start)
    if first_sunday < eval_start:
        first_sunday += timedelta(days=7)
    for horizon in horizons:
        ws = first_sunday
        while ws + timedelta(days=6) <= eval_end:
            week_end = ws + timedelta(days=6)
            seed_end = week_end - timedelta(days=horizon)
            try:
                seed_idx = panel.date_index(seed_end)
            except DomainError:
                rows.append(EvalRow(ws, horizon, math.nan, math.nan, "seed date outside panel"))
                ws += timedelta(days=7)
                continue
            if seed_idx < k - 1:
                rows.append(EvalRow(ws, horizon, math.nan, math.nan, "insufficient history"))
                ws += timedelta(days=7)
                continue
            window = dt.window_input(panel, stats, seed_idx - k + 1, k)
            outs = md.rollout(params, window, horizon)
            pred = {o.date: o.cases_next_raw for o in outs}
            model_week = np.sum([pred[ws + timedelta(days=i)] for i in range(7)], axis=0)
            truth_week = np.sum(
                [panel.daily_cases[panel.date_index(ws + timedelta(days=i))] for i in range(7)],
                axis=0,
            )
            persist_week = panel.daily_cases[seed_idx - 6 : seed_idx + 1].sum(axis=0)
            rows.append(
                EvalRow(
                    ws,
                    horizon,
                    float(np.abs(model_week - truth_week).mean()),
                    float(np.abs(persist_week - truth_week).mean()),
                )
            )
            ws += timedelta(days=7)
    return rows


def daily_mae(
    params: md.ModelParams,
    stats: NormalizationStats,
    panel: dt.PanelDataset,
    seed_end_idx: int,
    horizon: int,
) -> tuple[float, float]:
    """Daily-case MAE over [seed+1, seed+horizon]: (model, persistence).

    Persistence repeats the last observed day. Truth must exist in the
    panel for the whole horizon.
    """
    k = params.config.window
    if seed_end_idx < k - 1:
        raise DomainError("insufficient history before seed day")
    if seed_end_idx + horizon >= panel.n_days:
        raise DomainError("horizon extends past the panel")
    window = dt.window_input(panel, stats, seed_end_idx - k + 1, k)
    outs = md.rollout(params, window, horizon)
    preds = np.vstack([o.cases_next_raw for o in outs])
    truth = panel.daily_cases[seed_end_idx + 1 : seed_end_idx + 1 + horizon]
    persist = np.tile(panel.daily_cases[seed_end_idx], (horizon, 1))
    return (
        float(np.abs(preds - truth).mean()),
        float(np.abs(persist - truth).mean()),
    )


def attention_profile(
    params: md.ModelParams, stats: NormalizationStats, panel: dt.PanelDataset
) -> np.ndarray:
    """Average attention weights over every window of the panel: (K, 2) array
    with columns [case stream, mobility stream]; offsets run oldest-first."""
    k = params.config.window
    samples = dt.build_windows(panel, k, stats)
    acc = np.zeros((k, 2))
    for s in samples:
        out = md.forward(params, s.input)
        acc[:, 0] += out.attention_case
        acc[:, 1] += out.attention_mob
    return acc / len(samples)


# ---------------------------------------------------------------------------
# report writers


def write_training_log(log: list[dict], path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "lr", "train_loss", "val_loss"])
        for row in log:
            w.writerow([row["epoch"], repr(row["lr"]), repr(row["train_loss"]), repr(row["val_loss"])])
    return path


def write_eval_report(rows: list[EvalRow], path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["epiweek_start", "horizon_days", "model_mae", "persistence_mae"])
        for r in rows:
            if r.skipped:
                w.writerow([r.epiweek_start.isoformat(), r.horizon_days, "skipped", r.skipped])
            else:
                w.writerow(
                    [r.epiweek_start.isoformat(), r.horizon_days, repr(r.model_mae), repr(r.persistence_mae)]
                )
    return path


def write_attention_csv(profile: np.ndarray, path) -> Path:
    """CSV of per-offset average attention weights; offset -K is the oldest day."""
    path = Path(path)
    k = profile.shape[0]
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["offset_days", "case_stream_weight", "mobility_stream_weight"])
        for i in range(k):
            w.writerow([i - k, repr(float(profile[i, 0])), repr(float(profile[i, 1]))])
    return path
