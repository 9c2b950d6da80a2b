"""Panel ingestion, training windows, epi-week aggregation, synthetic worlds.

File formats (all CSV, ISO-8601 dates):
  cases.csv       header ``date,region,new_cases`` (optional trailing
                  ``cumulative_cases`` column; recomputation from dailies is
                  authoritative and disagreement only warns)
  mobility.csv    header ``date,origin,destination,count``; absent pairs are 0
  population.csv  header ``region,population``

The synthetic generator simulates a metapopulation SIR whose regions are
coupled through a weekday-periodic mobility network; it doubles as the
directional oracle for policy tests (less coupling must not produce more
cases in initially uninfected regions).
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from datetime import date, timedelta
from pathlib import Path
from typing import Sequence

import numpy as np

from . import model as md
from .errors import DataValidationError, DomainError, IngestionError
from .features import NormalizationStats

logger = logging.getLogger(__name__)


@dataclass
class PanelDataset:
    """Aligned daily panel: cases, origin-destination mobility, population.

    Treated as immutable after construction; mobility[t][i, j] is movement
    from region i to region j on day t (diagonal = intra-region movement).
    """

    region_ids: list[str]
    dates: list[date]
    daily_cases: np.ndarray  # (T, N)
    cumulative_cases: np.ndarray  # (T, N)
    mobility: np.ndarray  # (T, N, N)
    population: np.ndarray  # (N,)

    @property
    def n_days(self) -> int:
        return len(self.dates)

    @property
    def n_regions(self) -> int:
        return len(self.region_ids)

    def date_index(self, d: date) -> int:
        i = (d - self.dates[0]).days
        if i < 0 or i >= self.n_days or self.dates[i] != d:
            raise DomainError(f"date {d.isoformat()} not in panel")
        return i

    def slice_days(self, start: int, stop: int) -> "PanelDataset":
        return PanelDataset(
            region_ids=self.region_ids,
            dates=self.dates[start:stop],
            daily_cases=self.daily_cases[start:stop],
            cumulative_cases=self.cumulative_cases[start:stop],
            mobility=self.mobility[start:stop],
            population=self.population,
        )


def _recompute_cumulative(daily: np.ndarray) -> np.ndarray:
    return np.cumsum(daily, axis=0)


def validate_panel(panel: PanelDataset) -> None:
    t, n = panel.daily_cases.shape
    if len(panel.dates) != t or len(panel.region_ids) != n:
        raise IngestionError("panel dimensions disagree with labels")
    for a, b in zip(panel.dates, panel.dates[1:]):
        if (b - a).days != 1:
            raise IngestionError(
                f"dates are not consecutive: gap after {a.isoformat()}"
            )
    if np.any(panel.daily_cases < 0):
        raise DataValidationError("negative daily case count")
    if np.any(panel.mobility < 0):
        raise DataValidationError("negative mobility flow")
    if np.any(panel.population <= 0):
        raise DataValidationError("population must be positive")
    expected = _recompute_cumulative(panel.daily_cases)
    if not np.allclose(panel.cumulative_cases, expected):
        raise DataValidationError("cumulative cases do not accumulate dailies")


# ---------------------------------------------------------------------------
# CSV ingestion


def _parse_date(s: str, where: str) -> date:
    try:
        return date.fromisoformat(s.strip())
    except ValueError:
        raise IngestionError(f"{where}: bad date {s!r}") from None


def _parse_count(s: str, where: str) -> float:
    try:
        v = float(s)
    except ValueError:
        raise IngestionError(f"{where}: bad number {s!r}") from None
    if v < 0:
        raise DataValidationError(f"{where}: negative count {v}")
    return v


def load_panel(cases_path, mobility_path, population_path) -> PanelDataset:
    """Load and cross-validate the three panel files.

    Region sets must agree across files and the date range must be
    contiguous and identical for cases and mobility. The cumulative series
    is recomputed from dailies; a provided cumulative column that disagrees
    is overridden with a warning.
    """
    cases_path, mobility_path, population_path = (
        Path(cases_path), Path(mobility_path), Path(population_path),
    )

    population: dict[str, float] = {}
    with open(population_path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or [c.strip() for c in reader.fieldnames[:2]] != ["region", "population"]:
            raise IngestionError(f"{population_path.name}: expected header region,population")
        for row in reader:
            population[row["region"].strip()] = _parse_count(
                row["population"], population_path.name
            )
    if not population:
        raise IngestionError(f"{population_path.name}: no regions")

    cases: dict[tuple[date, str], float] = {}
    provided_cum: dict[tuple[date, str], float] = {}
    with open(cases_path, newline="") as f:
        reader = csv.DictReader(f)
        cols = [c.strip() for c in (reader.fieldnames or [])]
        if cols[:3] != ["date", "region", "new_cases"]:
            raise IngestionError(f"{cases_path.name}: expected header date,region,new_cases")
        has_cum = "cumulative_cases" in cols
        for row in reader:
            d = _parse_date(row["date"], cases_path.name)
            r = row["region"].strip()
            cases[(d, r)] = _parse_count(row["new_cases"], cases_path.name)
            if has_cum and row.get("cumulative_cases"):
                provided_cum[(d, r)] = _parse_count(
                    row["cumulative_cases"], cases_path.name
                )

    flows: dict[tuple[date, str, str], float] = {}
    mob_dates: set[date] = set()
    with open(mobility_path, newline="") as f:
        reader = csv.DictReader(f)
        cols = [c.strip() for c in (reader.fieldnames or [])]
        if cols[:4] != ["date", "origin", "destination", "count"]:
            raise IngestionError(
                f"{mobility_path.name}: expected header date,origin,destination,count"
            )
        for row in reader:
            d = _parse_date(row["date"], mobility_path.name)
            mob_dates.add(d)
            flows[(d, row["origin"].strip(), row["destination"].strip())] = _parse_count(
                row["count"], mobility_path.name
            )

    case_regions = {r for _, r in cases}
    case_dates = sorted({d for d, _ in cases})
    pop_regions = set(population)
    mob_regions = {r for _, o, de in flows for r in (o, de)}

    if case_regions != pop_regions:
        missing = sorted(case_regions ^ pop_regions)
        raise IngestionError(f"region sets differ between cases and population: {missing}")
    if not mob_regions <= pop_regions:
        raise IngestionError(
            f"mobility references unknown regions: {sorted(mob_regions - pop_regions)}"
        )
    if not case_dates:
        raise IngestionError("cases file has no rows")

    full_range = [
        case_dates[0] + timedelta(days=i)
        for i in range((case_dates[-1] - case_dates[0]).days + 1)
    ]
    missing_case_dates = [d for d in full_range if d not in set(case_dates)]
    if missing_case_dates:
        raise IngestionError(
            "missing case dates: " + ", ".join(d.isoformat() for d in missing_case_dates)
        )
    missing_mob_dates = [d for d in full_range if d not in mob_dates]
    extra_mob_dates = sorted(mob_dates - set(full_range))
    if missing_mob_dates or extra_mob_dates:
        parts = []
        if missing_mob_dates:
            parts.append("missing " + ", ".join(d.isoformat() for d in missing_mob_dates))
        if extra_mob_dates:
            parts.append("outside case range " + ", ".join(d.isoformat() for d in extra_mob_dates))
        raise IngestionError("mobility dates disagree with cases: " + "; ".join(parts))

    region_ids = sorted(pop_regions)
    ridx = {r: i for i, r in enumerate(region_ids)}
    t_len, n = len(full_range), len(region_ids)

    daily = np.zeros((t_len, n))
    for (d, r), v in cases.items():
        daily[(d - full_range[0]).days, ridx[r]] = v
    missing_cells = [
        (d, r) for d in full_range for r in region_ids if (d, r) not in cases
    ]
    if missing_cells:
        sample = ", ".join(f"{d.isoformat()}/{r}" for d, r in missing_cells[:5])
        raise IngestionError(f"missing case rows for {len(missing_cells)} date/region cells: {sample}")

    mobility = np.zeros((t_len, n, n))
    for (d, o, de), v in flows.items():
        mobility[(d - full_range[0]).days, ridx[o], ridx[de]] = v

    cum = _recompute_cumulative(daily)
    if provided_cum:
        for (d, r), v in provided_cum.items():
            got = cum[(d - full_range[0]).days, ridx[r]]
            if abs(got - v) > 1e-6:
                logger.warning(
                    "cumulative_cases for %s/%s is %s in file but %s recomputed; "
                    "using recomputed value",
                    d.isoformat(), r, v, got,
                )
                break

    panel = PanelDataset(
        region_ids=region_ids,
        dates=full_range,
        daily_cases=daily,
        cumulative_cases=cum,
        mobility=mobility,
        population=np.array([population[r] for r in region_ids]),
    )
    validate_panel(panel)
    return panel


# ---------------------------------------------------------------------------
# normalization and windows


@dataclass
class NormalizedPanel:
    daily: np.ndarray
    cum: np.ndarray
    mobility: np.ndarray
    population: np.ndarray


def compute_stats(panel: PanelDataset, train_days: int | None = None) -> NormalizationStats:
    """Fit normalization statistics on the leading ``train_days`` of the panel."""
    t = panel.n_days if train_days is None else min(train_days, panel.n_days)
    if t < 1:
        raise DomainError("compute_stats: empty training range")
    return NormalizationStats.fit(
        panel.daily_cases[:t],
        panel.cumulative_cases[:t],
        panel.mobility[:t],
        panel.population,
    )


def normalize(
    panel: PanelDataset, stats: NormalizationStats | None = None
) -> tuple[NormalizedPanel, NormalizationStats]:
    if stats is None:
        stats = compute_stats(panel)
    return (
        NormalizedPanel(
            daily=stats.normalize("daily", panel.daily_cases),
            cum=stats.normalize("cum", panel.cumulative_cases),
            mobility=stats.normalize("mob", panel.mobility),
            population=stats.normalize("pop", panel.population),
        ),
        stats,
    )


@dataclass
class WindowSample:
    """One training instance: a K-day window plus the next day's targets."""

    input: md.StepInput
    target_cases: np.ndarray  # (N,), normalized
    target_mobility: np.ndarray  # (N, N), normalized
    target_cases_raw: np.ndarray  # (N,)
    target_date: date


def window_input(panel: PanelDataset, stats: NormalizationStats, start: int, k: int) -> md.StepInput:
    """Build the StepInput spanning panel days [start, start+k)."""
    lo, hi = start, start + k
    return md.make_step_input(
        raw_daily=panel.daily_cases[lo:hi],
        raw_cum=panel.cumulative_cases[lo:hi],
        mobility=[panel.mobility[t] for t in range(lo, hi)],
        population=panel.population,
        dates=panel.dates[lo:hi],
        stats=stats,
    )


def build_windows(
    panel: PanelDataset, k: int, stats: NormalizationStats | None = None
) -> list[WindowSample]:
    """All K-day windows with next-day targets: exactly T - K samples, in order."""
    if panel.n_days <= k:
        raise DomainError(
            f"panel has {panel.n_days} days; need at least {k + 1} for window length {k}"
        )
    if stats is None:
        stats = compute_stats(panel)
    samples = []
    for start in range(panel.n_days - k):
        tgt = start + k
        samples.append(
            WindowSample(
                input=window_input(panel, stats, start, k),
                target_cases=stats.normalize("daily", panel.daily_cases[tgt]),
                target_mobility=stats.normalize("mob", panel.mobility[tgt]),
                target_cases_raw=panel.daily_cases[tgt].copy(),
                target_date=panel.dates[tgt],
            )
        )
    return samples


# ---------------------------------------------------------------------------
# epi-weeks (CDC definition: Sunday through Saturday)


def epiweek_start(d: date) -> date:
    """The Sunday opening the epi-week containing ``d``."""
    return d - timedelta(days=(d.weekday() + 1) % 7)


@dataclass
class EpiWeek:
    start: date  # Sunday
    totals: np.ndarray  # (N,) summed daily values
    days: int  # days of the span that fell in this week
    complete: bool  # all 7 days covered


def epiweek_aggregate(daily: np.ndarray, dates: Sequence[date]) -> list[EpiWeek]:
    """Sum daily values over Sunday-Saturday blocks.

    Leading/trailing partial weeks are flagged ``complete=False`` so
    evaluation can exclude them.
    """
    if len(dates) != daily.shape[0]:
        raise DomainError("dates and values disagree in length")
    weeks: list[EpiWeek] = []
    for i, d in enumerate(dates):
        ws = epiweek_start(d)
        if not weeks or weeks[-1].start != ws:
            weeks.append(EpiWeek(start=ws, totals=np.zeros(daily.shape[1]), days=0, complete=False))
        weeks[-1].totals += daily[i]
        weeks[-1].days += 1
    for w in weeks:
        w.complete = w.days == 7
    return weeks


# ---------------------------------------------------------------------------
# synthetic worlds


@dataclass(frozen=True)
class SynthConfig:
    n_regions: int = 8
    days: int = 240
    seed: int = 0
    beta: float = 0.06
    gamma: float = 0.065
    travel_intensity: float = 1.0
    weekly_amplitude: float = 0.3
    start_date: date = date(2021, 1, 3)
    noise_scale: float = 0.05
    mobility_noise: float = 0.08
    # slow activity regimes (AR(1) in log space), one shared national factor
    # plus one per region: exogenous multi-day mobility swings that make the
    # mobility->cases direction identifiable instead of being confounded by
    # the weekday pattern
    activity_rho: float = 0.95
    activity_sigma: float = 0.07
    national_rho: float = 0.97
    national_sigma: float = 0.06
    # infections surface in the case counts only after a reporting delay,
    # so observed mobility leads observed cases
    report_lag: int = 4
    initial_infected: int = 80
    # optional intervention for oracle runs: flows scaled from a given day on
    intervention_day: int | None = None
    intervention_scale: float = 1.0

    def validate(self) -> None:
        if self.n_regions < 2:
            raise DomainError("synth: need at least 2 regions")
        if self.days < 60:
            raise DomainError("synth: need at least 60 days")
        if self.beta < 0 or self.gamma < 0 or self.gamma > 1:
            raise DomainError("synth: beta must be >= 0 and gamma in [0, 1]")
        if self.travel_intensity < 0 or self.weekly_amplitude < 0:
            raise DomainError("synth: intensities must be nonnegative")
        if self.report_lag < 0 or self.report_lag >= self.days:
            raise DomainError("synth: report_lag out of range")
        if self.intervention_scale < 0:
            raise DomainError("synth: intervention_scale must be nonnegative")

    def to_dict(self) -> dict:
        d = {
            "n_regions": self.n_regions,
            "days": self.days,
            "seed": self.seed,
            "beta": self.beta,
            "gamma": self.gamma,
            "travel_intensity": self.travel_intensity,
            "weekly_amplitude": self.weekly_amplitude,
            "start_date": self.start_date.isoformat(),
            "noise_scale": self.noise_scale,
            "mobility_noise": self.mobility_noise,
            "activity_rho": self.activity_rho,
            "activity_sigma": self.activity_sigma,
            "national_rho": self.national_rho,
            "national_sigma": self.national_sigma,
            "report_lag": self.report_lag,
            "initial_infected": self.initial_infected,
            "intervention_day": self.intervention_day,
            "intervention_scale": self.intervention_scale,
        }
        return d


# weekday factor shape: quiet early week, busy weekend (Mon..Sun)
_WEEK_SHAPE = np.array([-0.30, -0.20, -0.05, 0.05, 0.35, 0.70, 0.45])


def synth_generate(
    config: SynthConfig, with_compartments: bool = False
) -> PanelDataset | tuple[PanelDataset, dict[str, np.ndarray]]:
    """Simulate a mobility-coupled metapopulation SIR panel.

    Daily new infections in region j are
    beta * S_j * (I_j + sum_i W_ij I_i / pop_i) / pop_j, perturbed by small
    multiplicative seeded noise and capped by S_j; recovery happens at rate
    gamma. S + I + R stays exactly equal to the population. The random
    draw sequence does not depend on travel intensity or interventions, so
    runs with different coupling are comparable draw-for-draw.

    With ``with_compartments`` the daily S/I/R trajectories come back too
    (tests use them to check conservation).
    """
    config.validate()
    n, t_len = config.n_regions, config.days
    rng = np.random.default_rng(config.seed)

    population = np.round(rng.uniform(3e5, 5e6, size=n))
    # intra-region trips are the dominant share of contacts, so mobility
    # level genuinely drives transmission (and policies have teeth)
    base_intra = 1.0 * population
    affinity = rng.uniform(0.5, 1.5, size=(n, n))
    cross = np.sqrt(np.outer(population, population)) * 1e-3 * affinity
    np.fill_diagonal(cross, 0.0)
    base_flows = np.diag(base_intra) + config.travel_intensity * cross

    dates = [config.start_date + timedelta(days=i) for i in range(t_len)]
    s = population.astype(np.float64).copy()
    i_comp = np.zeros(n)
    r_comp = np.zeros(n)
    seed_region = 0
    i_comp[seed_region] = float(config.initial_infected)
    s[seed_region] -= i_comp[seed_region]

    daily = np.zeros((t_len, n))
    infections = np.zeros((t_len, n))
    mobility = np.zeros((t_len, n, n))
    s_hist = np.zeros((t_len, n))
    i_hist = np.zeros((t_len, n))
    r_hist = np.zeros((t_len, n))
    log_act = np.zeros(n)
    log_nat = 0.0
    for ti in range(t_len):
        wd = dates[ti].weekday()
        wfac = 1.0 + config.weekly_amplitude * _WEEK_SHAPE[wd]
        log_act = config.activity_rho * log_act + config.activity_sigma * rng.normal(size=n)
        log_nat = config.national_rho * log_nat + config.national_sigma * rng.normal()
        mob_noise = rng.normal(0.0, config.mobility_noise, size=(n, n))
        inf_noise = rng.normal(0.0, config.noise_scale, size=n)

        act = np.exp(log_act + log_nat)
        regime = np.sqrt(np.outer(act, act))
        w = base_flows * wfac * regime * np.clip(1.0 + mob_noise, 0.0, None)
        if config.intervention_day is not None and ti >= config.intervention_day:
            w = w * config.intervention_scale
        w = np.round(w, 1)
        mobility[ti] = w

        pressure = i_comp + w.T @ (i_comp / population)
        expected = config.beta * s * pressure / population
        new_inf = np.round(np.clip(expected * np.clip(1.0 + inf_noise, 0.0, None), 0.0, s))
        recovered = np.minimum(np.round(config.gamma * i_comp), i_comp)

        s -= new_inf
        i_comp += new_inf - recovered
        r_comp += recovered
        infections[ti] = new_inf
        s_hist[ti], i_hist[ti], r_hist[ti] = s, i_comp, r_comp

    # observation model: infections are reported report_lag days later
    lag = config.report_lag
    daily[lag:] = infections[: t_len - lag]

    panel = PanelDataset(
        region_ids=[f"R{i:02d}" for i in range(n)],
        dates=dates,
        daily_cases=daily,
        cumulative_cases=_recompute_cumulative(daily),
        mobility=mobility,
        population=population,
    )
    if with_compartments:
        return panel, {"S": s_hist, "I": i_hist, "R": r_hist}
    return panel


# ---------------------------------------------------------------------------
# writers


def write_panel_csv(panel: PanelDataset, out_dir, provenance: dict | None = None) -> list[Path]:
    """Write cases/mobility/population CSVs (plus an optional provenance sidecar)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cases_p = out_dir / "cases.csv"
    mob_p = out_dir / "mobility.csv"
    pop_p = out_dir / "population.csv"

    with open(cases_p, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["date", "region", "new_cases"])
        for ti, d in enumerate(panel.dates):
            for ri, r in enumerate(panel.region_ids):
                w.writerow([d.isoformat(), r, _fmt(panel.daily_cases[ti, ri])])

    with open(mob_p, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["date", "origin", "destination", "count"])
        for ti, d in enumerate(panel.dates):
            mat = panel.mobility[ti]
            for i, o in enumerate(panel.region_ids):
                for j, de in enumerate(panel.region_ids):
                    if mat[i, j] != 0.0:
                        w.writerow([d.isoformat(), o, de, _fmt(mat[i, j])])

    with open(pop_p, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["region", "population"])
        for ri, r in enumerate(panel.region_ids):
            w.writerow([r, _fmt(panel.population[ri])])

    written = [cases_p, mob_p, pop_p]
    if provenance is not None:
        prov_p = out_dir / "provenance.json"
        prov_p.write_text(json.dumps(provenance, indent=2, sort_keys=True) + "\n")
        written.append(prov_p)
    return written


def _fmt(x: float) -> str:
    """Shortest exact decimal: integers without trailing .0."""
    if float(x).is_integer():
        return str(int(x))
    return repr(float(x))
