import type {
  CleaningMetrics,
  JobStatus,
  LabelingMetrics,
  QueriedItem,
  RepairResult,
  Suggestion,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
  }

  get isConflict(): boolean {
    return this.status === 409;
  }
}

async function parseError(response: Response): Promise<ApiError> {
  let detail = response.statusText;
  try {
    const body = (await response.json()) as { detail?: string };
    if (body && typeof body.detail === "string") detail = body.detail;
  } catch {
    // non-JSON error body: keep the status text
  }
  return new ApiError(response.status, detail);
}

/** Thin typed client over the service API; carries no state but the base URL. */
export class ApiClient {
  constructor(private readonly baseUrl: string = "") {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await fetch(this.baseUrl + path, {
      method,
      headers: body === undefined ? {} : { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!response.ok) throw await parseError(response);
    return (await response.json()) as T;
  }

  /** GET returning null on 204 (no suggestion / stream finished). */
  private async maybe<T>(path: string): Promise<T | null> {
    const response = await fetch(this.baseUrl + path);
    if (response.status === 204) return null;
    if (!response.ok) throw await parseError(response);
    return (await response.json()) as T;
  }

  putArtifact(content: string): Promise<{ ref: string }> {
    return fetch(this.baseUrl + "/artifacts", { method: "PUT", body: content }).then(
      async (response) => {
        if (!response.ok) throw await parseError(response);
        return (await response.json()) as { ref: string };
      },
    );
  }

  createCleaningSession(body: {
    dataset: string;
    validation: string;
    candidates?: string;
  }): Promise<CleaningMetrics> {
    return this.request("POST", "/sessions/cleaning", body);
  }

  cleaningMetrics(sessionId: string): Promise<CleaningMetrics> {
    return this.request("GET", `/sessions/cleaning/${sessionId}`);
  }

  suggestion(sessionId: string): Promise<Suggestion | null> {
    return this.maybe(`/sessions/cleaning/${sessionId}/suggestion`);
  }

  submitRepair(
    sessionId: string,
    cell: [number, number],
    value: number,
    expectedVersion: number,
  ): Promise<RepairResult> {
    return this.request("POST", `/sessions/cleaning/${sessionId}/repairs`, {
      cell,
      value,
      expected_version: expectedVersion,
    });
  }

  createLabelingSession(body: {
    stream: string;
    budget: number;
    seed?: number;
    eta?: number;
  }): Promise<LabelingMetrics> {
    return this.request("POST", "/sessions/labeling", body);
  }

  labelingMetrics(sessionId: string): Promise<LabelingMetrics> {
    return this.request("GET", `/sessions/labeling/${sessionId}`);
  }

  nextQuery(sessionId: string): Promise<QueriedItem | null> {
    return this.maybe(`/sessions/labeling/${sessionId}/next`);
  }

  submitLabel(
    sessionId: string,
    itemId: string,
    label: number,
    expectedVersion: number,
  ): Promise<LabelingMetrics> {
    return this.request("POST", `/sessions/labeling/${sessionId}/labels`, {
      item_id: itemId,
      label,
      expected_version: expectedVersion,
    });
  }

  job(jobId: string): Promise<JobStatus> {
    return this.request("GET", `/jobs/${jobId}`);
  }
}
