/** Thin typed client for the labeling/training service. */

import {
  PairPayload,
  SessionSummary,
  SimulationPayload,
  TrainResponse,
} from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export class ApiClient {
  constructor(
    private base: string = "",
    private fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchFn(this.base + path, init);
    if (!resp.ok) {
      let detail = resp.statusText;
      try {
        const body = await resp.json();
        if (body && body.detail) detail = String(body.detail);
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(resp.status, detail);
    }
    return (await resp.json()) as T;
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  createSession(config: Record<string, unknown> = {}): Promise<{ id: string }> {
    return this.post("/sessions", config);
  }

  summary(sessionId: string): Promise<SessionSummary> {
    return this.request(`/sessions/${sessionId}`);
  }

  nextPair(sessionId: string): Promise<PairPayload> {
    return this.request(`/sessions/${sessionId}/pairs/next`);
  }

  submitPreference(
    sessionId: string,
    pairId: string,
    choice: "first" | "second",
  ): Promise<{ label_count: number }> {
    return this.post(`/sessions/${sessionId}/preferences`, { pair_id: pairId, choice });
  }

  train(sessionId: string, overrides: Record<string, unknown> = {}): Promise<TrainResponse> {
    return this.post(`/sessions/${sessionId}/train`, overrides);
  }

  simulate(
    sessionId: string,
    modelId: string,
    x0: number[] | null = null,
  ): Promise<SimulationPayload> {
    return this.post(`/sessions/${sessionId}/simulate`, { model_id: modelId, x0 });
  }
}
