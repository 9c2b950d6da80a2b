/**
 * View models: pure translations of service responses into what the
 * charts draw. Every displayed number is copied verbatim from a response
 * field; nothing is recomputed beyond choosing scales for rendering.
 */

import type { AttentionInfo, ImpactResponse } from "./types.js";

export interface DeltaBar {
  region: string;
  delta: number; // verbatim from the service
}

export interface SeriesPoint {
  x: string; // date or week start
  baseline: number;
  scenario: number;
}

export interface ComparisonView {
  label: string;
  evalStart: string;
  evalEnd: string;
  bars: DeltaBar[];
  weekly: SeriesPoint[]; // complete epi-weeks only
  daily: SeriesPoint[];
  totalDelta: number;
}

export function buildComparison(resp: ImpactResponse): ComparisonView {
  const bars = resp.regions.map((region, i) => ({
    region,
    delta: resp.delta[i],
  }));
  const weekly = resp.weekly.week_starts
    .map((x, i) => ({
      x,
      baseline: resp.weekly.baseline_total[i],
      scenario: resp.weekly.scenario_total[i],
      complete: resp.weekly.complete[i],
    }))
    .filter((p) => p.complete)
    .map(({ x, baseline, scenario }) => ({ x, baseline, scenario }));
  const daily = resp.daily.dates.map((x, i) => ({
    x,
    baseline: resp.daily.baseline_total[i],
    scenario: resp.daily.scenario_total[i],
  }));
  return {
    label: resp.label,
    evalStart: resp.eval_start,
    evalEnd: resp.eval_end,
    bars,
    weekly,
    daily,
    totalDelta: resp.delta.reduce((a, b) => a + b, 0),
  };
}

export interface AttentionPoint {
  offset: number; // days before the prediction target
  caseWeight: number;
  mobilityWeight: number;
}

export interface AttentionView {
  enabled: boolean;
  points: AttentionPoint[];
  caseSum: number; // displayed as a normalization check, e.g. "1.00"
}

export function buildAttention(info: AttentionInfo): AttentionView {
  if (!info.enabled) {
    return { enabled: false, points: [], caseSum: 0 };
  }
  const points = info.offsets.map((offset, i) => ({
    offset,
    caseWeight: info.case_stream[i],
    mobilityWeight: info.mobility_stream[i],
  }));
  const caseSum = info.case_stream.reduce((a, b) => a + b, 0);
  return { enabled: true, points, caseSum };
}

export interface HistoryEntry {
  label: string;
  submittedAt: number; // ms epoch, supplied by the caller for testability
  view: ComparisonView;
}

/** Append-only scenario history; labels get a stable fallback numbering. */
export function appendHistory(
  history: HistoryEntry[],
  view: ComparisonView,
  submittedAt: number,
): HistoryEntry[] {
  const label = view.label || `scenario #${history.length + 1}`;
  return [...history, { label, submittedAt, view }];
}
