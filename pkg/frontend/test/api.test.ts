import { describe, expect, it } from "vitest";

import { ApiError, ServiceClient } from "../src/api.js";
import type { Scenario } from "../src/api.js";

function jsonResponse(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

const scenario: Scenario = {
  multiplier: 1.5,
  shock_start: 96,
  shock_end: 144,
  horizon: 696,
  policy: { kind: "hybrid", delta_p: 0.5, elasticity: -0.2, boost_frac: 0.3, top_k: 30 },
  balk_threshold: 200,
  balk_rate: 0.05,
  recovery_theta_frac: 0.01,
  recovery_hold: 24,
  price_always_on: false,
};

const report = {
  delta_auc: 1.0,
  delta_rt: 2,
  censored: false,
  peak: 3.0,
  ens: 4.0,
  policy: "hybrid",
  multiplier: 1.5,
};

function mockFetch(handler: (url: string, init?: RequestInit) => Response) {
  const calls: Array<{ url: string; init?: RequestInit }> = [];
  const impl = (url: string, init?: RequestInit) => {
    calls.push({ url, init });
    return Promise.resolve(handler(url, init));
  };
  return { impl, calls };
}

describe("ServiceClient", () => {
  it("parses a healthz payload", async () => {
    const { impl, calls } = mockFetch(() =>
      jsonResponse(200, { status: "ok", context_loaded: true }),
    );
    const client = new ServiceClient("http://svc", impl);
    expect(await client.healthz()).toEqual({ status: "ok", context_loaded: true });
    expect(calls[0]?.url).toBe("http://svc/healthz");
  });

  it("sends the pinned context version with a scenario", async () => {
    const { impl, calls } = mockFetch(() =>
      jsonResponse(200, {
        context_version: "abc",
        scenario,
        report,
        trajectory: {
          backlog: { hours: [0, 1], values: [0, 1] },
          served: { hours: [0, 1], values: [1, 1] },
          lost: { hours: [0, 1], values: [0, 0] },
        },
        load_series: {
          hour: [0, 1],
          p_base_kw: [1, 1],
          p_ev_kw: [2, 2],
          p_total_kw: [3, 3],
          lambda: [0.5, 0.5],
          transformer_kw: 6,
          stress_threshold: 0.8,
        },
      }),
    );
    const client = new ServiceClient("http://svc", impl);
    const out = await client.scenario(scenario, "abc");
    expect(out.report.delta_rt).toBe(2);
    const sent = JSON.parse(String(calls[0]?.init?.body));
    expect(sent.context_version).toBe("abc");
    expect(sent.policy.kind).toBe("hybrid");
    expect(calls[0]?.init?.method).toBe("POST");
  });

  it("surfaces a 400 with the offending field", async () => {
    const { impl } = mockFetch(() =>
      jsonResponse(400, { error: "elasticity must be a float", field: "policy.elasticity" }),
    );
    const client = new ServiceClient("http://svc", impl);
    const err = await client.scenario(scenario, "abc").catch((e: unknown) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect((err as ApiError).status).toBe(400);
    expect((err as ApiError).field).toBe("policy.elasticity");
    expect((err as ApiError).message).toBe("elasticity must be a float");
  });

  it("surfaces a 409 on a stale context version", async () => {
    const { impl } = mockFetch(() => jsonResponse(409, { error: "context version mismatch" }));
    const client = new ServiceClient("http://svc", impl);
    const err = await client.scenario(scenario, "old").catch((e: unknown) => e);
    expect((err as ApiError).status).toBe(409);
    expect((err as ApiError).field).toBeNull();
  });

  it("surfaces a 413 for an oversized sweep", async () => {
    const { impl } = mockFetch(() => jsonResponse(413, { error: "sweep grid too large" }));
    const client = new ServiceClient("http://svc", impl);
    const err = await client
      .sweep([1.2, 1.5], [-0.1], "hybrid", {}, "abc")
      .catch((e: unknown) => e);
    expect((err as ApiError).status).toBe(413);
    expect((err as ApiError).message).toBe("sweep grid too large");
  });

  it("keeps the status line when the error body is not JSON", async () => {
    const { impl } = mockFetch(() => new Response("boom", { status: 500 }));
    const client = new ServiceClient("http://svc", impl);
    const err = await client.healthz().catch((e: unknown) => e);
    expect((err as ApiError).message).toBe("HTTP 500");
  });

  it("rejects a malformed success payload", async () => {
    const { impl } = mockFetch(() => jsonResponse(200, { version: 42 }));
    const client = new ServiceClient("http://svc", impl);
    await expect(client.context()).rejects.toThrow();
  });

  it("parses a sweep response including the boundary fit", async () => {
    const { impl, calls } = mockFetch(() =>
      jsonResponse(200, {
        context_version: "abc",
        policy: "price",
        cells: [{ multiplier: 1.2, elasticity: -0.1, report }],
        boundary: {
          elasticities: [-0.1],
          m_crit: [1.6],
          excluded_columns: [],
          fit: { a: 1.7, b: -1.0 },
          warning: null,
        },
      }),
    );
    const client = new ServiceClient("http://svc", impl);
    const out = await client.sweep([1.2], [-0.1], "price", { horizon: 400 }, "abc");
    expect(out.boundary.fit?.a).toBeCloseTo(1.7);
    const sent = JSON.parse(String(calls[0]?.init?.body));
    expect(sent.scenario.horizon).toBe(400);
    expect(sent.multipliers).toEqual([1.2]);
  });
});
