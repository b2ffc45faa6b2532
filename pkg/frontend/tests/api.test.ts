import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";

function fakeFetch(status: number, body: unknown): typeof fetch {
  return (async () =>
    new Response(JSON.stringify(body), {
      status,
      headers: { "Content-Type": "application/json" },
    })) as typeof fetch;
}

const decision = { s_pa: 4, s_sr: 4, selected_caption_index: 0 };

describe("ApiClient.submitDecision", () => {
  it("returns ok with the updated item", async () => {
    const api = new ApiClient("", fakeFetch(200, { item_id: "a", status: "decided" }));
    const result = await api.submitDecision("a", decision);
    expect(result.kind).toBe("ok");
    if (result.kind === "ok") {
      expect(result.item.status).toBe("decided");
    }
  });

  it("classifies 409 as a conflict", async () => {
    const api = new ApiClient("", fakeFetch(409, { detail: "already decided" }));
    const result = await api.submitDecision("a", decision);
    expect(result).toEqual({ kind: "conflict", detail: "already decided" });
  });

  it("classifies 422 as invalid", async () => {
    const api = new ApiClient("", fakeFetch(422, { detail: "s_pa out of range" }));
    const result = await api.submitDecision("a", { ...decision, s_pa: 9 });
    expect(result.kind).toBe("invalid");
  });

  it("classifies transport failures as network errors (draft survives)", async () => {
    const failing = (async () => {
      throw new TypeError("fetch failed");
    }) as typeof fetch;
    const api = new ApiClient("", failing);
    const result = await api.submitDecision("a", decision);
    expect(result.kind).toBe("network");
  });
});

describe("ApiClient reads", () => {
  it("fetches the queue", async () => {
    const api = new ApiClient("", fakeFetch(200, { pending: ["a", "b"], count: 2 }));
    const queue = await api.getQueue();
    expect(queue.pending).toHaveLength(2);
  });

  it("raises on failed reads", async () => {
    const api = new ApiClient("", fakeFetch(500, {}));
    await expect(api.getStats()).rejects.toThrow(/HTTP 500/);
  });
});
