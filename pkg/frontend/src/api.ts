/** Typed client for the pressure-surrogate HTTP API.
 *
 * One in-flight request per endpoint: issuing a new request aborts the
 * previous one for the same endpoint, so stale slider positions can never
 * overwrite newer results (last write wins). Responses are passed through
 * untouched; the UI must not recompute anything from them.
 */

export interface ModelInfo {
  config_hash: string;
  n: number;
  s: number;
  d: number;
  zeta: number;
  w: number;
  head_range: [number, number];
  fit: Record<string, unknown>;
}

export interface ConfidencePoint {
  r: number;
  h: number;
  estimate: number;
  stderr: number | null;
}

export interface HeatmapDoc {
  r_grid: number[];
  h_grid: number[];
  values: number[][];
}

export interface MinRateDoc {
  rate: number | null;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

type FetchLike = (input: string, init?: { signal?: AbortSignal }) => Promise<Response>;

export class ApiClient {
  private inflight = new Map<string, AbortController>();

  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (...a) => fetch(...a),
  ) {}

  /** GET an endpoint, aborting any previous request to the same endpoint.
   * Resolves to null when this request was superseded (aborted). */
  async get<T>(endpoint: string, params: Record<string, string | number> = {}): Promise<T | null> {
    this.inflight.get(endpoint)?.abort();
    const ctl = new AbortController();
    this.inflight.set(endpoint, ctl);

    const qs = new URLSearchParams(Object.entries(params).map(([k, v]) => [k, String(v)]));
    const url = this.baseUrl + endpoint + (qs.size ? `?${qs}` : "");
    let resp: Response;
    try {
      resp = await this.fetchImpl(url, { signal: ctl.signal });
    } catch (err) {
      if ((err as { name?: string }).name === "AbortError") return null;
      throw err;
    } finally {
      if (this.inflight.get(endpoint) === ctl) this.inflight.delete(endpoint);
    }
    if (ctl.signal.aborted) return null;
    if (!resp.ok) {
      let detail = resp.statusText;
      try {
        detail = String(((await resp.json()) as { detail?: unknown }).detail ?? detail);
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(resp.status, detail);
    }
    return (await resp.json()) as T;
  }

  modelInfo(): Promise<ModelInfo | null> {
    return this.get<ModelInfo>("/model-info");
  }

  confidence(r: number, h: number): Promise<ConfidencePoint | null> {
    return this.get<ConfidencePoint>("/confidence", { r, h });
  }

  curve(h: number, points = 65): Promise<ConfidencePoint[] | null> {
    return this.get<ConfidencePoint[]>("/curve", { h, points });
  }

  heatmap(rs = 33, hs = 33): Promise<HeatmapDoc | null> {
    return this.get<HeatmapDoc>("/heatmap", { rs, hs });
  }

  minRate(h: number, target: number): Promise<MinRateDoc | null> {
    return this.get<MinRateDoc>("/min-rate", { h, target });
  }
}
