/**
 * Typed client for the local review service. fetch is injected so the client
 * is testable against a fake server; every call stays on the service origin,
 * and nothing raster-shaped ever goes out (requests carry JSON text only).
 */

import type {
  BlindedCase,
  DecisionRequest,
  DecisionResponse,
  QueueResponse,
  ReviewRecord,
  ReviewType,
  ScoresRequest,
  ScoresResponse,
} from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

async function parseError(response: Response): Promise<ApiError> {
  let detail = response.statusText;
  try {
    const body = (await response.json()) as { detail?: string };
    if (body.detail) detail = body.detail;
  } catch {
    /* non-JSON error body */
  }
  return new ApiError(response.status, detail);
}

export class ReviewApi {
  constructor(
    private readonly baseUrl = "",
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
    public reviewerId = "anonymous",
  ) {}

  private async get<T>(path: string): Promise<T> {
    const response = await this.fetchImpl(this.baseUrl + path);
    if (!response.ok) throw await parseError(response);
    return (await response.json()) as T;
  }

  private async post<T>(path: string, body: unknown): Promise<T> {
    const response = await this.fetchImpl(this.baseUrl + path, {
      method: "POST",
      headers: {
        "Content-Type": "application/json",
        "X-Reviewer-Id": this.reviewerId,
      },
      body: JSON.stringify(body),
    });
    if (!response.ok) throw await parseError(response);
    return (await response.json()) as T;
  }

  queue(type: ReviewType, status?: string): Promise<QueueResponse> {
    const query = status ? `?type=${type}&status=${status}` : `?type=${type}`;
    return this.get(`/api/review/queue${query}`);
  }

  record(id: string): Promise<ReviewRecord> {
    return this.get(`/api/review/${id}`);
  }

  decide(id: string, request: DecisionRequest): Promise<DecisionResponse> {
    return this.post(`/api/review/${id}/decision`, request);
  }

  evalCases(): Promise<{ cases: BlindedCase[]; count: number }> {
    return this.get("/api/eval/cases");
  }

  submitScores(caseId: string, request: ScoresRequest): Promise<ScoresResponse> {
    return this.post(`/api/eval/${caseId}/scores`, request);
  }

  reveal(caseId: string): Promise<{ case_id: string; mapping: Record<string, string> }> {
    return this.get(`/api/eval/${caseId}/reveal`);
  }

  report(): Promise<unknown> {
    return this.get("/api/report");
  }
}
