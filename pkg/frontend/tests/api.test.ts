import { describe, expect, it } from "vitest";

import { ApiError, drawSeed, ExplorerApi } from "../src/api.js";
import { GenerationRequest } from "../src/types.js";

type Call = { url: string; init?: RequestInit };

function mockFetch(handler: (url: string, init?: RequestInit) => { status: number; body: unknown }) {
  const calls: Call[] = [];
  const fetchFn = async (url: string, init?: RequestInit): Promise<Response> => {
    calls.push({ url, init });
    const { status, body } = handler(url, init);
    return new Response(JSON.stringify(body), {
      status,
      headers: { "Content-Type": "application/json" },
    });
  };
  return { fetchFn, calls };
}

const request: GenerationRequest = {
  given: [{ category: "upper", item_id: "o000001_upper" }],
  locks: [],
  k: 4,
  rounds: 2,
  seed: 9,
};

describe("ExplorerApi", () => {
  it("hits the documented endpoints with query params", async () => {
    const { fetchFn, calls } = mockFetch(() => ({
      status: 200,
      body: { items: [], total: 0, page: 2, page_size: 10, model_hash: "m" },
    }));
    const api = new ExplorerApi("http://svc", fetchFn);
    await api.catalog(2, 10);
    expect(calls[0].url).toBe("http://svc/api/catalog?page=2&page_size=10");
    await api.health();
    expect(calls[1].url).toBe("http://svc/api/health");
  });

  it("posts the generation request as JSON", async () => {
    const { fetchFn, calls } = mockFetch(() => ({
      status: 200,
      body: { sets: [], seed: 9, rounds: 2, k: 4, model_hash: "m", config_hash: "c" },
    }));
    const api = new ExplorerApi("", fetchFn);
    const result = await api.generate(request);
    expect(result?.seed).toBe(9);
    expect(calls[0].url).toBe("/api/generate");
    expect(calls[0].init?.method).toBe("POST");
    expect(JSON.parse(String(calls[0].init?.body))).toEqual(request);
  });

  it("surfaces HTTP errors with the service's detail message", async () => {
    const { fetchFn } = mockFetch(() => ({ status: 400, body: { detail: "given: duplicate category" } }));
    const api = new ExplorerApi("", fetchFn);
    await expect(api.generate(request)).rejects.toMatchObject({
      status: 400,
      detail: "given: duplicate category",
    });
    await expect(api.generate(request)).rejects.toBeInstanceOf(ApiError);
  });

  it("reports 503 before warm-up", async () => {
    const { fetchFn } = mockFetch(() => ({ status: 503, body: { detail: "warming up" } }));
    const api = new ExplorerApi("", fetchFn);
    await expect(api.catalog()).rejects.toMatchObject({ status: 503 });
  });

  it("drops responses superseded by a newer request", async () => {
    let release: (() => void) | null = null;
    const slowFirst = new Promise<void>((resolve) => (release = resolve));
    let count = 0;
    const fetchFn = async (): Promise<Response> => {
      const mine = ++count;
      if (mine === 1) await slowFirst;
      return new Response(
        JSON.stringify({ sets: [], seed: mine, rounds: 2, k: 1, model_hash: "m", config_hash: "c" }),
        { status: 200 }
      );
    };
    const api = new ExplorerApi("", fetchFn);
    const first = api.generate(request);
    const second = api.generate(request);
    release!();
    expect(await first).toBeNull(); // stale
    expect((await second)?.seed).toBe(2);
  });
});

describe("drawSeed", () => {
  it("stays within the non-negative 31-bit range", () => {
    expect(drawSeed(() => 0)).toBe(0);
    expect(drawSeed(() => 0.9999999999)).toBeLessThan(2 ** 31);
    expect(Number.isInteger(drawSeed())).toBe(true);
  });
});
