/**
 * Wire types for the scenario service. These mirror the JSON the backend
 * emits; the UI never recomputes model quantities, it only displays them.
 */

export type TransformKind = "scale" | "cut_interstate" | "isolate";

export interface TransformSpec {
  kind: TransformKind;
  factor?: number;
  region?: string;
  start?: string; // ISO date
  end?: string; // ISO date
}

/** Body of POST /scenario — the documented schema. */
export interface ScenarioRequestBody {
  transforms: TransformSpec[];
  horizon: number;
  label: string;
  eval_start?: string;
  eval_end?: string;
}

export interface RegionInfo {
  id: string;
  name: string;
  population: number;
}

export interface RegionsResponse {
  regions: RegionInfo[];
}

export interface AttentionInfo {
  enabled: boolean;
  offsets: number[];
  case_stream: number[];
  mobility_stream: number[];
}

export interface ModelResponse {
  config: { n_regions: number; window: number; edge_mode: string };
  attention: AttentionInfo;
  panel: { start: string; end: string; days: number };
}

export interface ImpactResponse {
  label: string;
  eval_start: string;
  eval_end: string;
  regions: string[];
  baseline_cases: number[];
  scenario_cases: number[];
  delta: number[];
  daily: {
    dates: string[];
    baseline_total: number[];
    scenario_total: number[];
  };
  weekly: {
    week_starts: string[];
    baseline_total: number[];
    scenario_total: number[];
    complete: boolean[];
  };
}
