import { describe, expect, it } from "vitest";
import { ApiClient, ApiError } from "../src/api.js";

function fakeFetch(status: number, body: unknown) {
  const calls: { url: string; init?: RequestInit }[] = [];
  const fn = async (url: string, init?: RequestInit) => {
    calls.push({ url, init });
    return new Response(JSON.stringify(body), {
      status,
      headers: { "Content-Type": "application/json" },
    });
  };
  return { fn, calls };
}

describe("ApiClient", () => {
  it("sends the operator token as a bearer header", async () => {
    const { fn, calls } = fakeFetch(200, []);
    const api = new ApiClient({ baseUrl: "http://srv:1", token: "tok-123" }, fn);
    await api.listBenchmarks();
    expect(calls[0].url).toBe("http://srv:1/api/benchmarks");
    expect((calls[0].init?.headers as Record<string, string>).Authorization).toBe("Bearer tok-123");
  });

  it("builds filtered execution queries", async () => {
    const { fn, calls } = fakeFetch(200, []);
    const api = new ApiClient({ baseUrl: "http://srv:1", token: "t" }, fn);
    await api.listExecutions({ state: "RUNNING", benchmark: "b-1" });
    expect(calls[0].url).toBe("http://srv:1/api/executions?state=RUNNING&benchmark=b-1");
  });

  it("surfaces error detail with the status code", async () => {
    const { fn } = fakeFetch(409, { detail: "illegal transition" });
    const api = new ApiClient({ baseUrl: "http://srv:1", token: "t" }, fn);
    const err = await api.trigger("b-1").catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(409);
    expect(err.detail).toBe("illegal transition");
  });

  it("wraps network failures as status 0", async () => {
    const api = new ApiClient({ baseUrl: "http://srv:1", token: "t" },
      async () => { throw new TypeError("connection refused"); });
    const err = await api.health().catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(0);
  });

  it("reconfigures base URL and token in place", async () => {
    const { fn, calls } = fakeFetch(200, []);
    const api = new ApiClient({ baseUrl: "http://old:1", token: "a" }, fn);
    api.configure({ baseUrl: "http://new:2", token: "b" });
    await api.listBenchmarks();
    expect(calls[0].url).toBe("http://new:2/api/benchmarks");
    expect((calls[0].init?.headers as Record<string, string>).Authorization).toBe("Bearer b");
  });
});
