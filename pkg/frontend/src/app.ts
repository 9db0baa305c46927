/** Dashboard wiring: sliders and inputs drive the query state; debounced,
 * self-cancelling requests keep at most one in-flight call per endpoint;
 * every rendered confidence is the verbatim string of a server field.
 *
 * The heatmap is fetched once per model; slider scrubbing only moves the
 * crosshair. The curve depends on the threshold, so threshold changes
 * refetch it through the same debounce window as the confidence readout.
 */

import { ApiClient, ApiError, type ConfidencePoint, type HeatmapDoc, type ModelInfo } from "./api.js";
import { renderCurve, renderHeatmap, updateCrosshair } from "./charts.js";
import { debounce, type Debounced } from "./debounce.js";
import { clampState, DEFAULT_TARGET, parseState, serializeState, type QueryState } from "./state.js";

export interface DashboardOptions {
  debounceMs?: number;
  curvePoints?: number;
  heatmapSize?: number;
  /** called with the serialized query string whenever the state changes */
  onStateSerialized?: (qs: string) => void;
}

const TEMPLATE = `
  <div class="banner hidden" data-role="banner"></div>
  <section class="controls">
    <label>extraction rate [m3/s]
      <input type="range" data-role="rate" min="0" max="1" step="any" value="0" disabled>
      <output data-role="rate-value"></output>
    </label>
    <label>pressure threshold [head]
      <input type="range" data-role="threshold" min="0" max="1" step="any" value="0" disabled>
      <output data-role="threshold-value"></output>
    </label>
    <label>target confidence
      <input type="number" data-role="target" min="0.01" max="0.99" step="0.01" value="${DEFAULT_TARGET}" disabled>
    </label>
  </section>
  <section class="readout">
    <div class="estimate" data-role="estimate-box">
      <span class="label">confidence</span>
      <span data-role="estimate">-</span>
      <span data-role="stderr" class="stderr"></span>
      <span data-role="stale" class="stale hidden">updating...</span>
    </div>
    <div data-role="min-rate-box">
      <span class="label">minimum safe rate</span>
      <span data-role="min-rate">-</span>
    </div>
    <div class="error hidden" data-role="error"></div>
  </section>
  <section class="charts">
    <div data-role="curve"></div>
    <div data-role="heatmap"></div>
  </section>
  <section class="meta">
    <span class="label">model</span>
    <span data-role="meta">-</span>
  </section>
`;

export class Dashboard {
  readonly api: ApiClient;
  state: QueryState = { rate: 0, threshold: 0, target: DEFAULT_TARGET };
  info: ModelInfo | null = null;

  private root: HTMLElement;
  private heatmapDoc: HeatmapDoc | null = null;
  private curveRows: ConfidencePoint[] = [];
  private minRateValue: number | null = null;
  private lastCurveThreshold: number | null = null;
  private queryDebounced: Debounced<[]>;
  private pending = new Set<Promise<unknown>>();
  private opts: Required<Omit<DashboardOptions, "onStateSerialized">> & Pick<DashboardOptions, "onStateSerialized">;

  constructor(root: HTMLElement, api: ApiClient, options: DashboardOptions = {}) {
    this.root = root;
    this.api = api;
    this.opts = {
      debounceMs: options.debounceMs ?? 150,
      curvePoints: options.curvePoints ?? 65,
      heatmapSize: options.heatmapSize ?? 33,
      onStateSerialized: options.onStateSerialized,
    };
    root.innerHTML = TEMPLATE;
    this.queryDebounced = debounce(() => this.track(this.refreshQueries()), this.opts.debounceMs);
    this.wireControls();
  }

  private el<T extends HTMLElement>(role: string): T {
    const el = this.root.querySelector<T>(`[data-role="${role}"]`);
    if (!el) throw new Error(`missing dashboard element: ${role}`);
    return el;
  }

  private track<T>(p: Promise<T>): Promise<T> {
    this.pending.add(p);
    // the tracking side-chain must not re-raise rejections the caller handles
    void p.catch(() => undefined).finally(() => this.pending.delete(p));
    return p;
  }

  /** Resolves when every outstanding fetch/render chain has settled; a query
   * round still waiting on the debounce window is flushed first. */
  async settle(): Promise<void> {
    this.queryDebounced.flush();
    while (this.pending.size > 0) {
      await Promise.allSettled([...this.pending]);
    }
  }

  private wireControls(): void {
    const rate = this.el<HTMLInputElement>("rate");
    const threshold = this.el<HTMLInputElement>("threshold");
    const target = this.el<HTMLInputElement>("target");
    rate.addEventListener("input", () => {
      this.setState({ ...this.state, rate: Number(rate.value) });
    });
    threshold.addEventListener("input", () => {
      this.setState({ ...this.state, threshold: Number(threshold.value) });
    });
    target.addEventListener("input", () => {
      this.setState({ ...this.state, target: Number(target.value) });
    });
  }

  /** Load model metadata, configure control domains, fetch the one-time
   * heatmap, and run the first query round. */
  async init(initialQuery = ""): Promise<void> {
    let info: ModelInfo | null;
    try {
      info = await this.track(this.api.modelInfo());
    } catch (err) {
      this.showBanner(`service unreachable: ${(err as Error).message}`);
      return;
    }
    if (!info) return;
    this.info = info;
    this.el("banner").classList.add("hidden");

    const mid = {
      rate: info.w / 2,
      threshold: (info.head_range[0] + info.head_range[1]) / 2,
      target: DEFAULT_TARGET,
    };
    this.state = clampState(parseState(initialQuery, mid), info.w, info.head_range);

    const rate = this.el<HTMLInputElement>("rate");
    rate.min = "0";
    rate.max = String(info.w);
    rate.value = String(this.state.rate);
    rate.disabled = false;
    const threshold = this.el<HTMLInputElement>("threshold");
    threshold.min = String(info.head_range[0]);
    threshold.max = String(info.head_range[1]);
    threshold.value = String(this.state.threshold);
    threshold.disabled = false;
    const target = this.el<HTMLInputElement>("target");
    target.value = String(this.state.target);
    target.disabled = false;

    this.el("meta").textContent =
      `n=${String(info.n)} s=${String(info.s)} d=${String(info.d)} zeta=${String(info.zeta)} (config ${info.config_hash})`;

    this.publishState();
    await this.track(this.loadHeatmap());
    await this.track(this.refreshQueries());
  }

  private showBanner(message: string): void {
    const banner = this.el("banner");
    banner.textContent = message;
    banner.classList.remove("hidden");
    for (const input of this.root.querySelectorAll("input")) input.disabled = true;
  }

  /** State transition from any control; crosshair and URL update instantly,
   * server queries go through the debounce window. */
  setState(next: QueryState): void {
    const thresholdChanged = next.threshold !== this.state.threshold;
    this.state = this.info ? clampState(next, this.info.w, this.info.head_range) : next;
    this.el<HTMLOutputElement>("rate-value").textContent = String(this.state.rate);
    this.el<HTMLOutputElement>("threshold-value").textContent = String(this.state.threshold);
    if (this.heatmapDoc) {
      updateCrosshair(this.el("heatmap"), this.heatmapDoc, this.state);
    }
    if (!thresholdChanged && this.curveRows.length) {
      this.renderCurveNow();
    }
    this.publishState();
    this.el("stale").classList.remove("hidden");
    this.queryDebounced();
  }

  private publishState(): void {
    this.opts.onStateSerialized?.(serializeState(this.state));
  }

  private async loadHeatmap(): Promise<void> {
    try {
      this.heatmapDoc = await this.api.heatmap(this.opts.heatmapSize, this.opts.heatmapSize);
    } catch (err) {
      this.showError(err);
      this.heatmapDoc = null;
    }
    renderHeatmap(this.el("heatmap"), this.heatmapDoc, this.state);
  }

  /** The debounced round: confidence + min-rate always, curve only when the
   * threshold moved since the last fetch. */
  private async refreshQueries(): Promise<void> {
    const { rate, threshold, target } = this.state;
    this.clearError();
    const wantCurve = this.lastCurveThreshold !== threshold;
    try {
      const [confidence, minRate, curve] = await Promise.all([
        this.api.confidence(rate, threshold),
        this.api.minRate(threshold, target),
        wantCurve ? this.api.curve(threshold, this.opts.curvePoints) : Promise.resolve(null),
      ]);
      if (confidence) this.renderConfidence(confidence);
      if (minRate) {
        this.minRateValue = minRate.rate;
        this.el("min-rate").textContent = minRate.rate === null ? "not attainable on grid" : String(minRate.rate);
      }
      if (curve) {
        this.curveRows = curve;
        this.lastCurveThreshold = threshold;
      }
      if (confidence || curve) this.renderCurveNow();
    } catch (err) {
      this.showError(err);
    } finally {
      if (this.pendingCount() <= 1) this.el("stale").classList.add("hidden");
    }
  }

  private pendingCount(): number {
    return this.pending.size;
  }

  private renderConfidence(point: ConfidencePoint): void {
    const est = this.el("estimate");
    est.textContent = String(point.estimate);
    est.setAttribute("data-raw", String(point.estimate));
    const stderr = this.el("stderr");
    stderr.textContent = point.stderr === null ? "" : `± ${String(point.stderr)}`;
    const box = this.el("estimate-box");
    box.classList.toggle("ok", point.estimate >= this.state.target);
    box.classList.toggle("alert", point.estimate < this.state.target);
  }

  private renderCurveNow(): void {
    renderCurve(this.el("curve"), this.curveRows, {
      target: this.state.target,
      minRate: this.minRateValue,
      currentRate: this.state.rate,
    });
  }

  private showError(err: unknown): void {
    const box = this.el("error");
    box.textContent = err instanceof ApiError ? `request rejected: ${err.detail}` : `request failed: ${(err as Error).message}`;
    box.classList.remove("hidden");
  }

  private clearError(): void {
    this.el("error").classList.add("hidden");
  }
}
