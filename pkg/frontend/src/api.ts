// Thin fetch client for the service API.  The fetch function is injected so
// tests can run without a server or a DOM.

import type {
  LabelItem,
  LabelsResponse,
  MetricsResponse,
  QueriesResponse,
  RankingResponse,
  StatusResponse,
} from "./types.js";

export type FetchLike = (
  url: string,
  init?: RequestInit,
) => Promise<Response>;

export class ApiError extends Error {
  status: number;
  detail: string;

  constructor(status: number, detail: string) {
    super(`HTTP ${status}: ${detail}`);
    this.status = status;
    this.detail = detail;
  }
}

async function asJson<T>(resp: Response): Promise<T> {
  if (resp.ok) {
    return (await resp.json()) as T;
  }
  let detail = resp.statusText;
  try {
    const body = await resp.json();
    if (body && typeof body.detail === "string") {
      detail = body.detail;
    } else if (body && body.detail !== undefined) {
      detail = JSON.stringify(body.detail);
    }
  } catch {
    // non-JSON error body; keep the status text
  }
  throw new ApiError(resp.status, detail);
}

export class ApiClient {
  private fetchFn: FetchLike;
  private base: string;

  constructor(fetchFn: FetchLike, base = "") {
    this.fetchFn = fetchFn;
    this.base = base;
  }

  getStatus(): Promise<StatusResponse> {
    return this.fetchFn(`${this.base}/api/status`).then((r) =>
      asJson<StatusResponse>(r),
    );
  }

  getQueries(): Promise<QueriesResponse> {
    return this.fetchFn(`${this.base}/api/queries`).then((r) =>
      asJson<QueriesResponse>(r),
    );
  }

  postLabels(iteration: number, labels: LabelItem[]): Promise<LabelsResponse> {
    return this.fetchFn(`${this.base}/api/labels`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ iteration, labels }),
    }).then((r) => asJson<LabelsResponse>(r));
  }

  getRanking(limit: number): Promise<RankingResponse> {
    return this.fetchFn(`${this.base}/api/ranking?limit=${limit}`).then((r) =>
      asJson<RankingResponse>(r),
    );
  }

  getMetrics(): Promise<MetricsResponse> {
    return this.fetchFn(`${this.base}/api/metrics`).then((r) =>
      asJson<MetricsResponse>(r),
    );
  }
}

// Offending process ids are quoted inside 422 detail strings, e.g.
// "ids not in the pending batch: ['proc-000009', 'ghost']".
export function offendersFromDetail(detail: string): string[] {
  const out: string[] = [];
  for (const m of detail.matchAll(/'([^']+)'/g)) {
    out.push(m[1]);
  }
  return out;
}
