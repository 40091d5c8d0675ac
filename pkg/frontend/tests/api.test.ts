import { describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";

function jsonResponse(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

describe("ApiClient", () => {
  it("parses successful payloads", async () => {
    const api = new ApiClient("", async (url) => {
      expect(url).toBe("/api/status");
      return jsonResponse(200, { session_index: 2, ledger_size: 5 });
    });
    const status = await api.status();
    expect(status.session_index).toBe(2);
    expect(status.ledger_size).toBe(5);
  });

  it("surfaces server error codes", async () => {
    const api = new ApiClient("", async () =>
      jsonResponse(409, { error: { code: "duplicate_feedback", message: "done" } }));
    const err = await api.feedback(3, "accept").catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(409);
    expect(err.code).toBe("duplicate_feedback");
    expect(err.message).toBe("done");
  });

  it("maps malformed error bodies to a generic code", async () => {
    const api = new ApiClient("", async () => new Response("boom", { status: 500 }));
    const err = await api.train().catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(500);
    expect(err.code).toBe("error");
  });

  it("wraps network failures with status 0", async () => {
    const api = new ApiClient("", async () => {
      throw new TypeError("fetch failed");
    });
    const err = await api.queue().catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(0);
    expect(err.code).toBe("network");
  });

  it("encodes feedback bodies and query params", async () => {
    let captured: { url: string; init?: RequestInit } | null = null;
    const api = new ApiClient("http://x", async (url, init) => {
      captured = { url, init };
      return jsonResponse(200, { resolved_label: 1, ledger_size: 1 });
    });
    await api.feedback(12, "reject");
    expect(captured!.url).toBe("http://x/api/feedback");
    expect(JSON.parse(captured!.init!.body as string))
      .toEqual({ item_id: 12, verdict: "reject" });

    await api.histogram("seen", "maxlogit");
    expect(captured!.url).toBe("http://x/api/scores/histogram?group=seen&method=maxlogit");
  });
});
