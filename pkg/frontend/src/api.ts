// Typed client for the session service; the only way the UI touches state.

import { BoxPayload, EditOp, validateEdits } from "./edits.js";

export interface CreateResponse {
  id: string;
  step: number;
  horizon: number;
  generator: string;
  seed: number;
}

export interface FramePayload {
  step: number;
  seed: number;
  generator: string;
  point_count: number;
  cloud_b64: string;
  range_image_b64: string;
  boxes: BoxPayload[];
  timestamp: number;
}

export interface CreateRequest {
  scenario?: string;
  inline?: unknown;
  generator?: "sde" | "diffusion";
  seed?: number;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: string,
  ) {
    super(`service error ${status}: ${detail}`);
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class SessionApi {
  constructor(
    private baseUrl: string,
    private fetchImpl: FetchLike = (...args) => fetch(...args),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const res = await this.fetchImpl(`${this.baseUrl}${path}`, {
      headers: { "Content-Type": "application/json" },
      ...init,
    });
    if (!res.ok) {
      let detail = res.statusText;
      try {
        const body = await res.json();
        detail = typeof body.detail === "string" ? body.detail : JSON.stringify(body.detail);
      } catch {
        // keep statusText
      }
      throw new ApiError(res.status, detail);
    }
    return (await res.json()) as T;
  }

  health(): Promise<{ status: string }> {
    return this.request("/healthz");
  }

  create(req: CreateRequest): Promise<CreateResponse> {
    return this.request("/sessions", { method: "POST", body: JSON.stringify(req) });
  }

  step(id: string, edits: EditOp[]): Promise<FramePayload> {
    const validated = validateEdits(edits);
    return this.request(`/sessions/${id}/step`, {
      method: "POST",
      body: JSON.stringify({ edits: validated }),
    });
  }

  frame(id: string, k: number): Promise<FramePayload> {
    return this.request(`/sessions/${id}/frames/${k}`);
  }

  remove(id: string): Promise<{ deleted: boolean }> {
    return this.request(`/sessions/${id}`, { method: "DELETE" });
  }
}
