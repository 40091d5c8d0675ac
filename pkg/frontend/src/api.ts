/** Typed client for the feedback-loop HTTP API.
 *
 * Every console number is traceable to one of these endpoints; the client
 * performs no metric computation of its own.
 */

export interface StatusPayload {
  session_index: number;
  replay_size: number;
  ledger_size: number;
  pending_items: number;
  method: string;
  trainable_groups: number;
}

export interface QueueItemPayload {
  item_id: number;
  verdict: "id" | "ood";
  score: number;
  image_id: number;
  bbox: number[];
}

export interface HistoryRow {
  session: number;
  group: string;
  method: string;
  fpr95: number;
  auroc: number;
  n_id: number;
  n_ood: number;
  threshold: number;
}

export interface HistogramPayload {
  method: string;
  group: string;
  edges: number[];
  id_counts: number[];
  ood_counts: number[];
}

export interface FeedbackReply {
  resolved_label: number;
  ledger_size: number;
}

export interface TrainReply {
  session_index: number;
  replay_size: number;
}

export type Verdict = "accept" | "reject";

/** Error carrying the server's machine-readable code; status 0 = network. */
export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly base: string = "",
    private readonly fetchFn: FetchLike = (...args) => fetch(...args),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let res: Response;
    try {
      res = await this.fetchFn(this.base + path, init);
    } catch (err) {
      throw new ApiError(0, "network", String(err));
    }
    let body: unknown = {};
    try {
      body = await res.json();
    } catch {
      /* non-JSON body: fall through to status handling */
    }
    if (!res.ok) {
      const detail = (body as { error?: { code?: string; message?: string } }).error ?? {};
      throw new ApiError(res.status, detail.code ?? "error",
        detail.message ?? `HTTP ${res.status}`);
    }
    return body as T;
  }

  status(): Promise<StatusPayload> {
    return this.request("/api/status");
  }

  queue(limit = 20): Promise<{ items: QueueItemPayload[] }> {
    return this.request(`/api/queue?limit=${limit}`);
  }

  feedback(itemId: number, verdict: Verdict): Promise<FeedbackReply> {
    return this.request("/api/feedback", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ item_id: itemId, verdict }),
    });
  }

  train(): Promise<TrainReply> {
    return this.request("/api/sessions/train", { method: "POST" });
  }

  history(): Promise<{ rows: HistoryRow[] }> {
    return this.request("/api/sessions/history");
  }

  histogram(group = "holdout", method = ""): Promise<HistogramPayload> {
    const suffix = method ? `&method=${encodeURIComponent(method)}` : "";
    return this.request(`/api/scores/histogram?group=${group}${suffix}`);
  }
}
