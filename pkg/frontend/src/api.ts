/**
 * Typed HTTP client for the experiment service.
 *
 * Thin wrappers over fetch, one per endpoint, with JSON decoding and error
 * mapping. Server errors carry FastAPI's {"detail": ...} body; they are
 * surfaced as ApiError so callers can branch on status and show the detail.
 */

import type {
  CorporaResponse,
  IndexJob,
  PipelinesResponse,
  Report,
  RunInfo,
  RunsResponse,
  SchemaResponse,
  StartRunResponse,
  Trace,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
    this.name = "ApiError";
  }
}

async function errorFrom(response: Response): Promise<ApiError> {
  let detail = response.statusText;
  try {
    const body = (await response.json()) as { detail?: unknown };
    if (typeof body.detail === "string") detail = body.detail;
    else if (body.detail !== undefined) detail = JSON.stringify(body.detail);
  } catch {
    // non-JSON error body; keep the status text
  }
  return new ApiError(response.status, detail);
}

export class ApiClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: typeof fetch = fetch,
  ) {}

  url(path: string): string {
    return this.baseUrl.replace(/\/$/, "") + path;
  }

  private async getJson<T>(path: string): Promise<T> {
    const response = await this.fetchImpl(this.url(path));
    if (!response.ok) throw await errorFrom(response);
    return (await response.json()) as T;
  }

  private async postJson<T>(path: string, body: unknown): Promise<T> {
    const response = await this.fetchImpl(this.url(path), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!response.ok) throw await errorFrom(response);
    return (await response.json()) as T;
  }

  schema(): Promise<SchemaResponse> {
    return this.getJson("/schema");
  }

  pipelines(): Promise<PipelinesResponse> {
    return this.getJson("/pipelines");
  }

  corpora(): Promise<CorporaResponse> {
    return this.getJson("/corpora");
  }

  startRun(body: Record<string, unknown>): Promise<StartRunResponse> {
    return this.postJson("/runs", body);
  }

  listRuns(): Promise<RunsResponse> {
    return this.getJson("/runs");
  }

  runInfo(runId: string): Promise<RunInfo> {
    return this.getJson(`/runs/${runId}`);
  }

  /** URL of the run's SSE stream, for the subscription layer. */
  eventsUrl(runId: string): string {
    return this.url(`/runs/${runId}/events`);
  }

  /** Persisted trace: one JSON object per line (NDJSON). */
  async trace(runId: string): Promise<Trace[]> {
    const response = await this.fetchImpl(this.url(`/runs/${runId}/trace`));
    if (!response.ok) throw await errorFrom(response);
    const text = await response.text();
    return parseTraceNdjson(text);
  }

  report(runId: string, metrics?: string[]): Promise<Report> {
    const query = metrics === undefined ? "" : `?metrics=${encodeURIComponent(metrics.join(","))}`;
    return this.getJson(`/runs/${runId}/report${query}`);
  }

  evaluate(runId: string, metrics?: string[]): Promise<Report> {
    const body: Record<string, unknown> = { run_id: runId };
    if (metrics !== undefined) body["metrics"] = metrics;
    return this.postJson("/evaluate", body);
  }

  buildIndex(method: string): Promise<IndexJob> {
    return this.postJson("/indexes", { method });
  }

  indexStatus(jobId: string): Promise<IndexJob> {
    return this.getJson(`/indexes/${jobId}`);
  }
}

/** Parse NDJSON trace text into trace objects, skipping blank lines. */
export function parseTraceNdjson(text: string): Trace[] {
  return text
    .split("\n")
    .filter((line) => line.trim() !== "")
    .map((line) => JSON.parse(line) as Trace);
}
