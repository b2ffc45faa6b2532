// Thin fetch client for the review-service API. Submit results distinguish
// conflicts (someone else decided first) from transport failures so the
// caller can preserve the reviewer's draft.

import type { DecisionBody, QueueResponse, ReviewItem, StatsResponse } from "./types.js";

export type SubmitResult =
  | { kind: "ok"; item: ReviewItem }
  | { kind: "conflict"; detail: string }
  | { kind: "invalid"; detail: string }
  | { kind: "network"; detail: string };

export class ApiClient {
  constructor(
    private baseUrl: string = "",
    private fetchFn: typeof fetch = fetch,
  ) {}

  private async getJson<T>(path: string): Promise<T> {
    const resp = await this.fetchFn(`${this.baseUrl}${path}`);
    if (!resp.ok) {
      throw new Error(`GET ${path} failed: HTTP ${resp.status}`);
    }
    return (await resp.json()) as T;
  }

  getQueue(limit = 50): Promise<QueueResponse> {
    return this.getJson<QueueResponse>(`/api/queue?limit=${limit}`);
  }

  getItem(itemId: string): Promise<ReviewItem> {
    return this.getJson<ReviewItem>(`/api/items/${encodeURIComponent(itemId)}`);
  }

  getStats(): Promise<StatsResponse> {
    return this.getJson<StatsResponse>("/api/stats");
  }

  async submitDecision(itemId: string, body: DecisionBody): Promise<SubmitResult> {
    let resp: Response;
    try {
      resp = await this.fetchFn(
        `${this.baseUrl}/api/items/${encodeURIComponent(itemId)}/decision`,
        {
          method: "POST",
          headers: { "Content-Type": "application/json" },
          body: JSON.stringify(body),
        },
      );
    } catch (err) {
      return { kind: "network", detail: String(err) };
    }
    if (resp.status === 409) {
      return { kind: "conflict", detail: await safeDetail(resp) };
    }
    if (resp.status === 422 || resp.status === 400) {
      return { kind: "invalid", detail: await safeDetail(resp) };
    }
    if (!resp.ok) {
      return { kind: "network", detail: `HTTP ${resp.status}` };
    }
    return { kind: "ok", item: (await resp.json()) as ReviewItem };
  }
}

async function safeDetail(resp: Response): Promise<string> {
  try {
    const body = (await resp.json()) as { detail?: string };
    return body.detail ?? `HTTP ${resp.status}`;
  } catch {
    return `HTTP ${resp.status}`;
  }
}
