/**
 * DOM wiring for the scenario explorer.
 *
 * The analyst composes transforms in the palette, submits, and compares
 * the returned per-region deltas and epi-week curves against earlier
 * submissions in the history list. At most one request is in flight;
 * later submissions queue behind it.
 */

import { ApiError, ServiceClient } from "./api.js";
import {
  DraftTransform,
  ScenarioDraft,
  describeTransform,
  emptyDraft,
  serializeDraft,
  validateDraft,
} from "./scenario.js";
import type { RegionInfo, TransformKind } from "./types.js";
import {
  AttentionView,
  ComparisonView,
  HistoryEntry,
  appendHistory,
  buildAttention,
  buildComparison,
} from "./viewmodel.js";
import { attentionChart, comparisonLineChart, deltaBarChart, formatCount } from "./charts.js";

type Mode = "weekly" | "daily";

interface AppState {
  regions: RegionInfo[];
  draft: ScenarioDraft;
  history: HistoryEntry[];
  current: ComparisonView | null;
  attention: AttentionView | null;
  mode: Mode;
  busy: boolean;
  errors: string[];
}

const state: AppState = {
  regions: [],
  draft: emptyDraft(),
  history: [],
  current: null,
  attention: null,
  mode: "weekly",
  busy: false,
  errors: [],
};

const client = new ServiceClient("");
let queue: Promise<void> = Promise.resolve();

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

export async function loadRegions(): Promise<void> {
  const banner = el<HTMLDivElement>("banner");
  try {
    const [regions, model] = await Promise.all([client.getRegions(), client.getModel()]);
    state.regions = regions.regions;
    state.attention = buildAttention(model.attention);
    banner.hidden = true;
    renderAll();
  } catch (e) {
    state.regions = [];
    state.current = null; // never show stale data over an error
    banner.hidden = false;
    banner.innerHTML =
      `service unreachable (${e instanceof ApiError ? e.message : String(e)}) ` +
      `<button id="retry">retry</button>`;
    el<HTMLButtonElement>("retry").onclick = () => void loadRegions();
    renderAll();
  }
}

function addTransform(kind: TransformKind): void {
  const t: DraftTransform = { kind };
  if (kind === "scale") t.factor = 0.5;
  if (kind === "isolate") t.region = state.regions[0]?.id;
  state.draft.transforms.push(t);
  renderAll();
}

export function submitScenario(): void {
  const problems = validateDraft(state.draft, state.regions.map((r) => r.id));
  if (problems.length > 0) {
    state.errors = problems;
    renderAll();
    return;
  }
  const body = serializeDraft(state.draft);
  state.busy = true;
  state.errors = [];
  renderAll();
  queue = queue.then(async () => {
    try {
      const resp = await client.postScenario(body);
      const view = buildComparison(resp);
      state.current = view;
      state.history = appendHistory(state.history, view, Date.now());
    } catch (e) {
      if (e instanceof ApiError && e.details) {
        state.errors = e.details.map((d) => `${d.field}: ${d.message}`);
      } else {
        state.errors = [e instanceof Error ? e.message : String(e)];
      }
    } finally {
      state.busy = false;
      renderAll();
    }
  });
}

function renderPalette(): void {
  const list = el<HTMLUListElement>("transform-list");
  list.innerHTML = "";
  state.draft.transforms.forEach((t, i) => {
    const li = document.createElement("li");
    li.textContent = describeTransform(t) + " ";
    const controls = document.createElement("span");
    if (t.kind === "scale") {
      const factor = document.createElement("input");
      factor.type = "number";
      factor.step = "0.1";
      factor.min = "0";
      factor.value = String(t.factor ?? "");
      factor.onchange = () => {
        t.factor = factor.value === "" ? undefined : Number(factor.value);
        renderAll();
      };
      controls.append("factor ", factor);
    }
    if (t.kind === "isolate") {
      const sel = document.createElement("select");
      for (const r of state.regions) {
        const opt = document.createElement("option");
        opt.value = r.id;
        opt.textContent = `${r.name} (pop ${formatCount(r.population)})`;
        if (r.id === t.region) opt.selected = true;
        sel.append(opt);
      }
      sel.onchange = () => {
        t.region = sel.value;
      };
      controls.append(" region ", sel);
    }
    for (const field of ["start", "end"] as const) {
      const input = document.createElement("input");
      input.type = "date";
      input.value = t[field] ?? "";
      input.onchange = () => {
        t[field] = input.value || undefined;
      };
      controls.append(` ${field} `, input);
    }
    const remove = document.createElement("button");
    remove.textContent = "×";
    remove.onclick = () => {
      state.draft.transforms.splice(i, 1);
      renderAll();
    };
    controls.append(" ", remove);
    li.append(controls);
    list.append(li);
  });

  el<HTMLButtonElement>("submit").disabled =
    state.busy || state.draft.transforms.length === 0;
}

function renderErrors(): void {
  const box = el<HTMLDivElement>("errors");
  box.hidden = state.errors.length === 0;
  box.innerHTML = state.errors.map((e) => `<div>${e}</div>`).join("");
}

function renderComparison(): void {
  const bars = el<HTMLDivElement>("delta-bars");
  const curves = el<HTMLDivElement>("curves");
  const summary = el<HTMLDivElement>("summary");
  if (!state.current) {
    bars.innerHTML = "";
    curves.innerHTML = "";
    summary.textContent = "no scenario submitted yet";
    return;
  }
  const v = state.current;
  summary.textContent =
    `${v.label || "scenario"}: total case delta ${formatCount(v.totalDelta)} ` +
    `over ${v.evalStart} → ${v.evalEnd}`;
  bars.innerHTML = deltaBarChart(v.bars);
  const series = state.mode === "weekly" ? v.weekly : v.daily;
  const title = state.mode === "weekly" ? "epi-week totals" : "daily totals";
  curves.innerHTML = comparisonLineChart(series, title);
}

function renderAttention(): void {
  const panel = el<HTMLDivElement>("attention-panel");
  if (!state.attention || !state.attention.enabled) {
    panel.innerHTML = state.attention
      ? "<em>attention disabled in this checkpoint</em>"
      : "";
    return;
  }
  panel.innerHTML =
    `<h3>attention weights (sum ${state.attention.caseSum.toFixed(2)})</h3>` +
    attentionChart(state.attention.points);
}

function renderHistory(): void {
  const list = el<HTMLOListElement>("history");
  list.innerHTML = "";
  for (const entry of [...state.history].reverse()) {
    const li = document.createElement("li");
    const link = document.createElement("a");
    link.href = "#";
    link.textContent = `${entry.label} (Δ ${formatCount(entry.view.totalDelta)})`;
    link.onclick = (ev) => {
      ev.preventDefault();
      state.current = entry.view;
      renderAll();
    };
    li.append(link);
    list.append(li);
  }
}

function renderAll(): void {
  renderPalette();
  renderErrors();
  renderComparison();
  renderAttention();
  renderHistory();
}

export function start(): void {
  el<HTMLButtonElement>("add-scale").onclick = () => addTransform("scale");
  el<HTMLButtonElement>("add-cut").onclick = () => addTransform("cut_interstate");
  el<HTMLButtonElement>("add-isolate").onclick = () => addTransform("isolate");
  el<HTMLButtonElement>("submit").onclick = () => submitScenario();
  el<HTMLInputElement>("horizon").onchange = (ev) => {
    state.draft.horizon = Number((ev.target as HTMLInputElement).value);
  };
  el<HTMLInputElement>("label").onchange = (ev) => {
    state.draft.label = (ev.target as HTMLInputElement).value;
  };
  el<HTMLSelectElement>("mode").onchange = (ev) => {
    state.mode = (ev.target as HTMLSelectElement).value as Mode;
    renderAll();
  };
  void loadRegions();
}

if (typeof document !== "undefined" && document.getElementById("app-root")) {
  start();
}
