/**
 * Thin typed client for the scenario service. The fetch implementation is
 * injectable so tests can mock the wire without a running backend.
 */

import type {
  ImpactResponse,
  ModelResponse,
  RegionsResponse,
  ScenarioRequestBody,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
    readonly details?: { field: string; message: string }[],
  ) {
    super(message);
  }
}

export class ServiceClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchImpl: FetchLike = (u, i) => fetch(u, i),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let resp: Response;
    try {
      resp = await this.fetchImpl(this.baseUrl + path, init);
    } catch (e) {
      throw new ApiError(0, `service unreachable: ${String(e)}`);
    }
    let body: unknown = null;
    try {
      body = await resp.json();
    } catch {
      /* non-JSON error body */
    }
    if (!resp.ok) {
      const rec = (body ?? {}) as { error?: string; details?: { field: string; message: string }[] };
      throw new ApiError(resp.status, rec.error ?? `HTTP ${resp.status}`, rec.details);
    }
    return body as T;
  }

  getRegions(): Promise<RegionsResponse> {
    return this.request<RegionsResponse>("/regions");
  }

  getModel(): Promise<ModelResponse> {
    return this.request<ModelResponse>("/model");
  }

  postScenario(body: ScenarioRequestBody): Promise<ImpactResponse> {
    return this.request<ImpactResponse>("/scenario", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }
}
