/** Thin typed client for the generation service.
 *
 * All methods are pure HTTP wrappers; the fetch implementation is injected
 * so tests can run without a server. Generation responses arriving after a
 * newer request was issued are discarded (stale-seed guard).
 */

import {
  CatalogResponse,
  GenerationRequest,
  GenerationResponse,
  HealthResponse,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(public status: number, public detail: string) {
    super(`HTTP ${status}: ${detail}`);
  }
}

async function parseJson<T>(response: Response): Promise<T> {
  const body = await response.json().catch(() => ({}));
  if (!response.ok) {
    const detail =
      typeof (body as { detail?: unknown }).detail === "string"
        ? (body as { detail: string }).detail
        : response.statusText;
    throw new ApiError(response.status, detail);
  }
  return body as T;
}

export class ExplorerApi {
  private generation = 0;

  constructor(
    private baseUrl: string,
    private fetchFn: FetchLike = (url, init) => fetch(url, init)
  ) {}

  async health(): Promise<HealthResponse> {
    return parseJson(await this.fetchFn(`${this.baseUrl}/api/health`));
  }

  async catalog(page = 0, pageSize = 24): Promise<CatalogResponse> {
    const url = `${this.baseUrl}/api/catalog?page=${page}&page_size=${pageSize}`;
    return parseJson(await this.fetchFn(url));
  }

  /** Resolves to null when a newer generate() superseded this request. */
  async generate(request: GenerationRequest): Promise<GenerationResponse | null> {
    const ticket = ++this.generation;
    const response = await this.fetchFn(`${this.baseUrl}/api/generate`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(request),
    });
    const payload = await parseJson<GenerationResponse>(response);
    return ticket === this.generation ? payload : null;
  }
}

/** Seeds are drawn client-side so every shown result is replayable. */
export function drawSeed(rng: () => number = Math.random): number {
  return Math.floor(rng() * 2 ** 31);
}
