import type {
  BenchmarkSummary, ExecutionDetail, ExecutionSummary, LogPage, Observation, VariabilityRow,
} from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(public status: number, public detail: string) {
    super(`${status}: ${detail}`);
  }
}

export interface ApiSettings {
  baseUrl: string;
  token: string;
}

/** Thin client over the gateway REST API. fetch is injectable for tests. */
export class ApiClient {
  constructor(private settings: ApiSettings, private fetchFn: FetchLike = fetch.bind(globalThis)) {}

  configure(settings: ApiSettings): void {
    this.settings = settings;
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = {
      method,
      headers: { Authorization: `Bearer ${this.settings.token}` },
    };
    if (body !== undefined) {
      init.headers = { ...(init.headers as Record<string, string>), "Content-Type": "application/json" };
      init.body = JSON.stringify(body);
    }
    let response: Response;
    try {
      response = await this.fetchFn(`${this.settings.baseUrl}${path}`, init);
    } catch (err) {
      throw new ApiError(0, `network error: ${String(err)}`);
    }
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const payload = (await response.json()) as { detail?: string };
        if (payload.detail) detail = payload.detail;
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(response.status, detail);
    }
    if (response.status === 204) return undefined as T;
    return (await response.json()) as T;
  }

  health(): Promise<{ status: string }> {
    return this.request("GET", "/health");
  }

  listBenchmarks(): Promise<BenchmarkSummary[]> {
    return this.request("GET", "/api/benchmarks");
  }

  getBenchmark(id: string): Promise<BenchmarkSummary> {
    return this.request("GET", `/api/benchmarks/${id}`);
  }

  cloneBenchmark(id: string, overrides: Record<string, unknown>): Promise<BenchmarkSummary> {
    return this.request("POST", `/api/benchmarks/${id}/clone`, { overrides });
  }

  trigger(benchmarkId: string): Promise<ExecutionDetail> {
    return this.request("POST", `/api/benchmarks/${benchmarkId}/executions`);
  }

  listExecutions(filter: { state?: string; benchmark?: string } = {}): Promise<ExecutionSummary[]> {
    const params = new URLSearchParams();
    if (filter.state) params.set("state", filter.state);
    if (filter.benchmark) params.set("benchmark", filter.benchmark);
    const qs = params.toString();
    return this.request("GET", `/api/executions${qs ? `?${qs}` : ""}`);
  }

  getExecution(id: string): Promise<ExecutionDetail> {
    return this.request("GET", `/api/executions/${id}`);
  }

  getLog(id: string, after: number): Promise<LogPage> {
    return this.request("GET", `/api/executions/${id}/log?after=${after}`);
  }

  getObservations(id: string, metric?: string): Promise<Observation[]> {
    const qs = metric ? `?metric=${encodeURIComponent(metric)}` : "";
    return this.request("GET", `/api/executions/${id}/observations${qs}`);
  }

  enterDevMode(id: string): Promise<ExecutionDetail> {
    return this.request("POST", `/api/executions/${id}/dev_mode`);
  }

  exitDevMode(id: string): Promise<ExecutionDetail> {
    return this.request("DELETE", `/api/executions/${id}/dev_mode`);
  }

  reprovision(id: string): Promise<{ execution: ExecutionDetail }> {
    return this.request("POST", `/api/executions/${id}/reprovision`);
  }

  releaseNow(id: string): Promise<ExecutionDetail> {
    return this.request("POST", `/api/executions/${id}/release`);
  }

  variability(benchmarkId: string, metric: string): Promise<VariabilityRow> {
    return this.request("GET", `/api/benchmarks/${benchmarkId}/metrics/${encodeURIComponent(metric)}/variability`);
  }
}
