import type {
  ComponentsPayload,
  EditCommand,
  RolloutPayload,
  ServiceConfig,
  SessionPayload,
} from "./types.js";

export type FetchLike = (
  url: string,
  init?: { method?: string; headers?: Record<string, string>; body?: string },
) => Promise<{ ok: boolean; status: number; json(): Promise<unknown> }>;

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
    this.name = "ApiError";
  }
}

/** Thin typed client over the editing service; transport is injectable so
 * tests can run against an in-memory service. */
export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = fetch as unknown as FetchLike,
  ) {}

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<T> {
    const res = await this.fetchFn(this.baseUrl + path, {
      method,
      headers: { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const data = (await res.json()) as T & { detail?: string };
    if (!res.ok) {
      throw new ApiError(res.status, String(data?.detail ?? "request failed"));
    }
    return data;
  }

  config(): Promise<ServiceConfig> {
    return this.request("GET", "/config");
  }

  createSession(seed: number, K?: number): Promise<SessionPayload> {
    return this.request("POST", "/sessions", { seed, K: K ?? null });
  }

  getSession(sid: string): Promise<SessionPayload> {
    return this.request("GET", `/sessions/${sid}`);
  }

  deleteSession(sid: string): Promise<{ deleted: string }> {
    return this.request("DELETE", `/sessions/${sid}`);
  }

  edit(sid: string, command: EditCommand): Promise<SessionPayload> {
    return this.request("POST", `/sessions/${sid}/edit`, { command });
  }

  components(sid: string): Promise<ComponentsPayload> {
    return this.request("GET", `/sessions/${sid}/components`);
  }

  rollout(sid: string, frames: number): Promise<RolloutPayload> {
    return this.request("POST", `/sessions/${sid}/rollout`, { frames });
  }

  sample(n: number, seed: number): Promise<SessionPayload[]> {
    return this.request("POST", "/sample", { n, seed });
  }
}
