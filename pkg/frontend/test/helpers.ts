import { ApiClient, type ConfidencePoint, type HeatmapDoc, type ModelInfo } from "../src/api.js";

export const INFO: ModelInfo = {
  config_hash: "cafe0123",
  n: 1024,
  s: 8,
  d: 32,
  zeta: 5.97e-8,
  w: 0.031688,
  head_range: [-0.004, 0.012],
  fit: { zeta_init: 1.51e-6, iterations: 200 },
};

export interface MockOptions {
  info?: ModelInfo | "unreachable";
  confidence?: (r: number, h: number) => ConfidencePoint | { status: number; detail: string };
  curvePoints?: number;
  hang?: Set<string>;
}

export interface MockServer {
  client: ApiClient;
  calls: Record<string, number>;
  urls: string[];
  served: { confidence: ConfidencePoint[] };
}

function json(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), { status, headers: { "content-type": "application/json" } });
}

/** In-memory stand-in for the surrogate service with call accounting. */
export function mockServer(options: MockOptions = {}): MockServer {
  const calls: Record<string, number> = {};
  const urls: string[] = [];
  const served = { confidence: [] as ConfidencePoint[] };
  const info = options.info ?? INFO;

  const fetchImpl = async (url: string, init?: { signal?: AbortSignal }): Promise<Response> => {
    const u = new URL(url);
    const endpoint = u.pathname;
    calls[endpoint] = (calls[endpoint] ?? 0) + 1;
    urls.push(url);

    if (options.hang?.has(endpoint)) {
      return new Promise<Response>((_, reject) => {
        init?.signal?.addEventListener("abort", () => reject(new DOMException("aborted", "AbortError")));
      });
    }
    if (endpoint === "/model-info") {
      if (info === "unreachable") throw new TypeError("fetch failed");
      return json(info);
    }
    const realInfo = info === "unreachable" ? INFO : info;
    if (endpoint === "/confidence") {
      const r = Number(u.searchParams.get("r"));
      const h = Number(u.searchParams.get("h"));
      const out = options.confidence
        ? options.confidence(r, h)
        : { r, h, estimate: 0.123456789012345, stderr: 0.00125 };
      if ("status" in out) return json({ detail: out.detail }, out.status);
      served.confidence.push(out);
      return json(out);
    }
    if (endpoint === "/curve") {
      const h = Number(u.searchParams.get("h"));
      const points = options.curvePoints ?? Number(u.searchParams.get("points") ?? 65);
      const rows: ConfidencePoint[] = Array.from({ length: points }, (_, i) => {
        const r = (realInfo.w * i) / Math.max(points - 1, 1);
        return { r, h, estimate: Math.min(0.05 + (0.9 * i) / Math.max(points - 1, 1), 1), stderr: 0.001 };
      });
      return json(rows);
    }
    if (endpoint === "/heatmap") {
      const rs = Number(u.searchParams.get("rs") ?? 33);
      const hs = Number(u.searchParams.get("hs") ?? 33);
      const r_grid = Array.from({ length: rs }, (_, i) => (realInfo.w * i) / Math.max(rs - 1, 1));
      const [lo, hi] = realInfo.head_range;
      const h_grid = Array.from({ length: hs }, (_, j) => lo + ((hi - lo) * j) / Math.max(hs - 1, 1));
      const values = r_grid.map((_, i) => h_grid.map((_, j) => Math.min((i / rs + j / hs) / 2 + 0.05, 1)));
      const doc: HeatmapDoc = { r_grid, h_grid, values };
      return json(doc);
    }
    if (endpoint === "/min-rate") {
      return json({ rate: realInfo.w / 4 });
    }
    return json({ detail: `unknown endpoint ${endpoint}` }, 404);
  };

  return { client: new ApiClient("http://mock", fetchImpl), calls, urls, served };
}

export function scrubSlider(root: HTMLElement, role: string, value: number): void {
  const input = root.querySelector<HTMLInputElement>(`[data-role="${role}"]`)!;
  input.value = String(value);
  input.dispatchEvent(new Event("input"));
}
