import type { ScribbleDocument } from "./strokes.js";

export interface SessionInfo {
  session_id: string;
  sequence_id: string;
  frame_count: number;
  object_count: number;
  has_ground_truth: boolean;
  state: string;
}

export interface RoundSummary {
  round: number;
  annotated_frame: number;
  per_frame_j: number[] | null;
  suggested_next: number | null;
  masks: string[];
}

export interface Suggestion {
  frame: number | null;
  basis: string;
  complete: boolean;
}

export interface MetricsSummary {
  rounds: number;
  j: number[];
  f: number[];
  jf: number[];
  auc_j: number;
  auc_f: number;
}

/** Error carrying the HTTP status so the UI can react per kind:
 * 409 keeps the stroke buffer and retries later, 422 keeps the buffer
 * and shows the validation detail. */
export class ApiError extends Error {
  constructor(public status: number, public detail: string) {
    super(`${status}: ${detail}`);
  }

  get isConflict(): boolean {
    return this.status === 409;
  }

  get isValidation(): boolean {
    return this.status === 422;
  }
}

async function parseError(response: Response): Promise<never> {
  let detail = response.statusText;
  try {
    const body = await response.json();
    if (body && typeof body.detail === "string") detail = body.detail;
  } catch {
    // non-JSON error body; keep the status text
  }
  throw new ApiError(response.status, detail);
}

export class SessionApi {
  constructor(
    private base: string = "",
    private fetchFn: typeof fetch = fetch,
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(`${this.base}${path}`, init);
    if (!response.ok) await parseError(response);
    return (await response.json()) as T;
  }

  createSession(sequencePath: string, objectCount?: number): Promise<SessionInfo> {
    return this.request("/sessions", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ sequence_path: sequencePath, object_count: objectCount }),
    });
  }

  getState(sessionId: string): Promise<{ state: string; round: number; annotated_frames: number[] }> {
    return this.request(`/sessions/${sessionId}`);
  }

  submitScribbles(sessionId: string, doc: ScribbleDocument): Promise<RoundSummary> {
    return this.request(`/sessions/${sessionId}/scribbles`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(doc),
    });
  }

  suggest(sessionId: string): Promise<Suggestion> {
    return this.request(`/sessions/${sessionId}/suggest`);
  }

  metrics(sessionId: string): Promise<MetricsSummary> {
    return this.request(`/sessions/${sessionId}/metrics`);
  }

  frameUrl(sessionId: string, frame: number): string {
    return `${this.base}/sessions/${sessionId}/frames/${frame}`;
  }

  overlayUrl(sessionId: string, round: number, frame: number, opacity: number): string {
    return `${this.base}/sessions/${sessionId}/overlays/${round}/${frame}?opacity=${opacity}`;
  }
}
