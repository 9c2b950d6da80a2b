/**
 * Scenario drafts: what the analyst composes in the palette before
 * submitting. A draft serializes to exactly the POST /scenario body and
 * deserializes back without loss.
 */

import type { ScenarioRequestBody, TransformKind, TransformSpec } from "./types.js";

export interface DraftTransform {
  kind: TransformKind;
  factor?: number;
  region?: string;
  start?: string;
  end?: string;
}

export interface ScenarioDraft {
  label: string;
  horizon: number;
  transforms: DraftTransform[];
  evalStart?: string;
  evalEnd?: string;
}

export function emptyDraft(): ScenarioDraft {
  return { label: "", horizon: 30, transforms: [] };
}

const ISO_DATE = /^\d{4}-\d{2}-\d{2}$/;

/** Client-side validation; returns human-readable problems, empty if valid. */
export function validateDraft(draft: ScenarioDraft, regionIds: string[]): string[] {
  const problems: string[] = [];
  if (!Number.isInteger(draft.horizon) || draft.horizon < 1) {
    problems.push("horizon must be a positive whole number of days");
  }
  draft.transforms.forEach((t, i) => {
    const at = `transform ${i + 1}`;
    if (t.kind === "scale") {
      if (t.factor === undefined || Number.isNaN(t.factor) || t.factor < 0) {
        problems.push(`${at}: scale needs a factor ≥ 0`);
      }
    }
    if (t.kind === "isolate") {
      if (!t.region) {
        problems.push(`${at}: isolate needs a region`);
      } else if (regionIds.length > 0 && !regionIds.includes(t.region)) {
        problems.push(`${at}: unknown region ${t.region}`);
      }
    }
    for (const [name, value] of [
      ["start", t.start],
      ["end", t.end],
    ] as const) {
      if (value !== undefined && !ISO_DATE.test(value)) {
        problems.push(`${at}: ${name} must be an ISO date (YYYY-MM-DD)`);
      }
    }
    if (t.start && t.end && t.end < t.start) {
      problems.push(`${at}: date range is reversed`);
    }
  });
  return problems;
}

/** Serialize to the documented POST /scenario schema (no extra fields). */
export function serializeDraft(draft: ScenarioDraft): ScenarioRequestBody {
  const body: ScenarioRequestBody = {
    label: draft.label,
    horizon: draft.horizon,
    transforms: draft.transforms.map((t) => {
      const spec: TransformSpec = { kind: t.kind };
      if (t.factor !== undefined) spec.factor = t.factor;
      if (t.region !== undefined) spec.region = t.region;
      if (t.start !== undefined) spec.start = t.start;
      if (t.end !== undefined) spec.end = t.end;
      return spec;
    }),
  };
  if (draft.evalStart !== undefined) body.eval_start = draft.evalStart;
  if (draft.evalEnd !== undefined) body.eval_end = draft.evalEnd;
  return body;
}

/** Inverse of serializeDraft; round-trips losslessly. */
export function deserializeDraft(body: ScenarioRequestBody): ScenarioDraft {
  const draft: ScenarioDraft = {
    label: body.label,
    horizon: body.horizon,
    transforms: body.transforms.map((t) => ({ ...t })),
  };
  if (body.eval_start !== undefined) draft.evalStart = body.eval_start;
  if (body.eval_end !== undefined) draft.evalEnd = body.eval_end;
  return draft;
}

export function describeTransform(t: DraftTransform): string {
  const range =
    t.start || t.end ? ` [${t.start ?? "…"} → ${t.end ?? "…"}]` : "";
  switch (t.kind) {
    case "scale":
      return `scale mobility ×${t.factor ?? "?"}${range}`;
    case "cut_interstate":
      return `cut interstate travel${range}`;
    case "isolate":
      return `isolate ${t.region ?? "?"}${range}`;
  }
}
