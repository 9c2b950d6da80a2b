"""Counterfactual mobility transforms and scenario impact reports.

A scenario is an ordered list of dated transforms; during a rollout each
mobility matrix entering the model (seed-window days and re-ingested
predictions alike) passes through every transform whose date range covers
that matrix's day, in declaration order. The redistribution transforms
(interstate cutoff, single-region isolation) move travel to the diagonal
instead of deleting it: travelers stay home, so every row sum is preserved
exactly.

Scenario file schema (JSON):
    {
      "label": "halve-mobility",            # optional
      "transforms": [
        {"kind": "scale", "factor": 0.5,
         "start": "2021-02-01", "end": "2021-03-31"},   # dates optional
        {"kind": "cut_interstate"},
        {"kind": "isolate", "region": "R03"}
      ]
    }
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path

import numpy as np

from . import data as dt
from . import model as md
from .errors import ContractError, DomainError, ScenarioFormatError
from .features import NormalizationStats

TRANSFORM_KINDS = ("scale", "cut_interstate", "isolate")


def scale_mobility(w: np.ndarray, factor: float) -> np.ndarray:
    """Entrywise scaling, diagonal included."""
    if factor < 0:
        raise DomainError(f"scale factor must be nonnegative, got {factor}")
    return w * factor


def cut_interstate(w: np.ndarray) -> np.ndarray:
    """Zero all cross-region travel; each region's full outflow (its whole
    row sum) becomes intra-region movement on the diagonal."""
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise DomainError(f"mobility matrix must be square, got {w.shape}")
    return np.diag(w.sum(axis=1))


def isolate_region(w: np.ndarray, r: int) -> np.ndarray:
    """Seal one region: its outflow returns to its own diagonal, would-be
    visitors stay home on theirs, and row/column r lose all off-diagonal
    mass. Entries not involving r are untouched."""
    n = w.shape[0]
    if not 0 <= r < n:
        raise DomainError(f"region index {r} out of range for {n} regions")
    out = w.copy()
    off_out = w[r].sum() - w[r, r]
    out[r, r] += off_out
    for i in range(n):
        if i != r:
            out[i, i] += w[i, r]
    out[r, :] = np.where(np.arange(n) == r, out[r, r], 0.0)
    out[:, r] = np.where(np.arange(n) == r, out[r, r], 0.0)
    return out


@dataclass(frozen=True)
class Transform:
    kind: str
    factor: float | None = None
    region: str | None = None
    start: date | None = None
    end: date | None = None

    def active_on(self, d: date) -> bool:
        if self.start is not None and d < self.start:
            return False
        if self.end is not None and d > self.end:
            return False
        return True

    def validate(self) -> None:
        if self.kind not in TRANSFORM_KINDS:
            raise ScenarioFormatError(f"unknown transform kind {self.kind!r}")
        if self.kind == "scale":
            if self.factor is None or self.factor < 0:
                raise ScenarioFormatError("scale transform needs factor >= 0")
        if self.kind == "isolate" and not self.region:
            raise ScenarioFormatError("isolate transform needs a region")
        if self.start is not None and self.end is not None and self.end < self.start:
            raise ScenarioFormatError(
                f"transform date range is reversed: {self.start} > {self.end}"
            )


@dataclass
class PolicyScenario:
    transforms: list[Transform] = field(default_factory=list)
    label: str = ""

    def validate(self) -> None:
        for t in self.transforms:
            t.validate()

    @property
    def empty(self) -> bool:
        return not self.transforms


class ResolvedScenario:
    """A scenario bound to a panel's region ordering; usable as a rollout
    mobility transform via ``apply``."""

    def __init__(self, scenario: PolicyScenario, region_ids: list[str]):
        scenario.validate()
        self.scenario = scenario
        self.region_index = {r: i for i, r in enumerate(region_ids)}
        self._steps: list[tuple[Transform, int | None]] = []
        for t in scenario.transforms:
            idx = None
            if t.kind == "isolate":
                if t.region not in self.region_index:
                    raise DomainError(f"isolate region {t.region!r} not in panel")
                idx = self.region_index[t.region]
            self._steps.append((t, idx))

    @property
    def empty(self) -> bool:
        return not self._steps

    def apply(self, w: np.ndarray, d: date) -> np.ndarray:
        """Run every transform active on day ``d``, in declared order.

        Returns the input object untouched when nothing applies, so
        callers can skip feature rebuilds on no-op days.
        """
        out = w
        for t, idx in self._steps:
            if not t.active_on(d):
                continue
            if t.kind == "scale":
                out = scale_mobility(out, t.factor)
            elif t.kind == "cut_interstate":
                out = cut_interstate(out)
            else:
                out = isolate_region(out, idx)
        return out


# ---------------------------------------------------------------------------
# scenario file round trip


def scenario_to_dict(scenario: PolicyScenario) -> dict:
    out = {"label": scenario.label, "transforms": []}
    for t in scenario.transforms:
        item: dict = {"kind": t.kind}
        if t.factor is not None:
            item["factor"] = t.factor
        if t.region is not None:
            item["region"] = t.region
        if t.start is not None:
            item["start"] = t.start.isoformat()
        if t.end is not None:
            item["end"] = t.end.isoformat()
        out["transforms"].append(item)
    return out


def scenario_from_dict(payload: dict) -> PolicyScenario:
    if not isinstance(payload, dict):
        raise ScenarioFormatError("scenario must be a JSON object")
    raw = payload.get("transforms")
    if not isinstance(raw, list):
        raise ScenarioFormatError("scenario needs a 'transforms' list")
    transforms = []
    for i, item in enumerate(raw):
        if not isinstance(item, dict):
            raise ScenarioFormatError(f"transforms[{i}] must be an object")
        kind = item.get("kind")
        try:
            t = Transform(
                kind=kind,
                factor=float(item["factor"]) if "factor" in item else None,
                region=item.get("region"),
                start=date.fromisoformat(item["start"]) if "start" in item else None,
                end=date.fromisoformat(item["end"]) if "end" in item else None,
            )
            t.validate()
        except (ValueError, TypeError) as e:
            raise ScenarioFormatError(f"transforms[{i}]: {e}") from None
        except ScenarioFormatError as e:
            raise ScenarioFormatError(f"transforms[{i}]: {e}") from None
        transforms.append(t)
    return PolicyScenario(transforms=transforms, label=str(payload.get("label", "")))


def load_scenario(path) -> PolicyScenario:
    text = Path(path).read_text()
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioFormatError(f"{Path(path).name}:{e.lineno}: {e.msg}") from None
    return scenario_from_dict(payload)


# ---------------------------------------------------------------------------
# impact analysis


@dataclass
class ImpactReport:
    """Per-region cumulative predicted new cases, scenario vs baseline."""

    region_ids: list[str]
    eval_start: date
    eval_end: date
    baseline_cases: np.ndarray  # (N,)
    scenario_cases: np.ndarray  # (N,)
    delta: np.ndarray  # scenario - baseline, exactly
    dates: list[date]  # full forecast horizon
    baseline_daily_total: np.ndarray  # (horizon,) national sums
    scenario_daily_total: np.ndarray
    label: str = ""


def run_scenario(
    params: md.ModelParams,
    stats: NormalizationStats,
    panel: dt.PanelDataset,
    scenario: PolicyScenario,
    seed_date: date,
    eval_start: date,
    eval_end: date,
) -> ImpactReport:
    """Baseline and counterfactual rollouts from one seed window.

    Both rollouts start from identical windows ending at ``seed_date``;
    the report accumulates each region's predicted dailies over
    [eval_start, eval_end].
    """
    k = params.config.window
    seed_idx = panel.date_index(seed_date)
    if seed_idx < k - 1:
        raise ContractError(
            f"need {k} days of history ending {seed_date.isoformat()}"
        )
    if eval_start <= seed_date:
        raise ContractError("eval_start must be after the seed date")
    if eval_end < eval_start:
        raise ContractError("eval window is reversed")
    horizon = (eval_end - seed_date).days

    resolved = ResolvedScenario(scenario, panel.region_ids)
    window = dt.window_input(panel, stats, seed_idx - k + 1, k)
    base_outs = md.rollout(params, window, horizon)
    scen_outs = md.rollout(
        params, window, horizon, resolved.apply if not resolved.empty else None
    )

    dates = [o.date for o in base_outs]
    in_eval = [eval_start <= d <= eval_end for d in dates]
    base = np.sum([o.cases_next_raw for o, m in zip(base_outs, in_eval) if m], axis=0)
    scen = np.sum([o.cases_next_raw for o, m in zip(scen_outs, in_eval) if m], axis=0)
    return ImpactReport(
        region_ids=list(panel.region_ids),
        eval_start=eval_start,
        eval_end=eval_end,
        baseline_cases=np.asarray(base, dtype=np.float64),
        scenario_cases=np.asarray(scen, dtype=np.float64),
        delta=np.asarray(scen, dtype=np.float64) - np.asarray(base, dtype=np.float64),
        dates=dates,
        baseline_daily_total=np.array([o.cases_next_raw.sum() for o in base_outs]),
        scenario_daily_total=np.array([o.cases_next_raw.sum() for o in scen_outs]),
        label=scenario.label,
    )


def write_impact_csv(report: ImpactReport, path) -> Path:
    import csv

    path = Path(path)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["region", "baseline_cases", "scenario_cases", "delta"])
        for i, r in enumerate(report.region_ids):
            w.writerow(
                [
                    r,
                    repr(float(report.baseline_cases[i])),
                    repr(float(report.scenario_cases[i])),
                    repr(float(report.delta[i])),
                ]
            )
    return path


def impact_to_dict(report: ImpactReport) -> dict:
    """JSON-ready impact report, including daily and epi-week series for charts."""
    daily_matrix = np.column_stack(
        [report.baseline_daily_total, report.scenario_daily_total]
    )
    weeks = dt.epiweek_aggregate(daily_matrix, report.dates)
    return {
        "label": report.label,
        "eval_start": report.eval_start.isoformat(),
        "eval_end": report.eval_end.isoformat(),
        "regions": report.region_ids,
        "baseline_cases": [float(x) for x in report.baseline_cases],
        "scenario_cases": [float(x) for x in report.scenario_cases],
        "delta": [float(x) for x in report.delta],
        "daily": {
            "dates": [d.isoformat() for d in report.dates],
            "baseline_total": [float(x) for x in report.baseline_daily_total],
            "scenario_total": [float(x) for x in report.scenario_daily_total],
        },
        "weekly": {
            "week_starts": [w.start.isoformat() for w in weeks],
            "baseline_total": [float(w.totals[0]) for w in weeks],
            "scenario_total": [float(w.totals[1]) for w in weeks],
            "complete": [w.complete for w in weeks],
        },
    }
