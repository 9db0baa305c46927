import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { Dashboard } from "../src/app.js";
import { parseState, serializeState } from "../src/state.js";
import { INFO, mockServer, scrubSlider } from "./helpers.js";

function mount(): HTMLElement {
  const root = document.createElement("div");
  document.body.appendChild(root);
  return root;
}

afterEach(() => {
  document.body.replaceChildren();
  vi.useRealTimers();
});

describe("model info sync", () => {
  it("configures slider domains from the server", async () => {
    const server = mockServer();
    const dash = new Dashboard(mount(), server.client);
    await dash.init();
    const rate = document.querySelector<HTMLInputElement>('[data-role="rate"]')!;
    expect(rate.max).toBe(String(INFO.w));
    expect(rate.disabled).toBe(false);
    const threshold = document.querySelector<HTMLInputElement>('[data-role="threshold"]')!;
    expect(threshold.min).toBe(String(INFO.head_range[0]));
    expect(threshold.max).toBe(String(INFO.head_range[1]));
  });

  it("shows metadata exactly as returned", async () => {
    const server = mockServer();
    const dash = new Dashboard(mount(), server.client);
    await dash.init();
    const meta = document.querySelector('[data-role="meta"]')!.textContent!;
    expect(meta).toContain(`n=${String(INFO.n)}`);
    expect(meta).toContain(`s=${String(INFO.s)}`);
    expect(meta).toContain(`d=${String(INFO.d)}`);
    expect(meta).toContain(`zeta=${String(INFO.zeta)}`);
    expect(meta).toContain(INFO.config_hash);
  });

  it("unreachable service shows a banner and disables controls", async () => {
    const server = mockServer({ info: "unreachable" });
    const dash = new Dashboard(mount(), server.client);
    await dash.init();
    const banner = document.querySelector('[data-role="banner"]')!;
    expect(banner.classList.contains("hidden")).toBe(false);
    expect(banner.textContent).toContain("unreachable");
    for (const input of document.querySelectorAll("input")) {
      expect(input.disabled).toBe(true);
    }
  });
});

describe("debounced querying", () => {
  it("slider scrubbing issues at most one confidence request per window", async () => {
    const server = mockServer();
    const dash = new Dashboard(mount(), server.client, { debounceMs: 150 });
    await dash.init();
    await dash.settle();
    const before = server.calls["/confidence"] ?? 0;

    vi.useFakeTimers();
    for (let i = 1; i <= 12; i++) {
      scrubSlider(document.body, "rate", (INFO.w * i) / 20);
      vi.advanceTimersByTime(10); // all moves inside one debounce window
    }
    vi.advanceTimersByTime(200); // window elapses once
    vi.useRealTimers();
    await dash.settle();

    expect((server.calls["/confidence"] ?? 0) - before).toBe(1);
    expect((server.calls["/min-rate"] ?? 0) - before).toBeGreaterThanOrEqual(1);
  });

  it("a newer request aborts the in-flight one (last write wins)", async () => {
    const hang = new Set<string>(["/confidence"]);
    const server = mockServer({ hang });
    const dash = new Dashboard(mount(), server.client, { debounceMs: 0 });
    const initDone = dash.init(); // the first confidence request hangs
    await vi.waitFor(() => {
      expect(document.querySelector<HTMLInputElement>('[data-role="rate"]')!.disabled).toBe(false);
    });

    hang.delete("/confidence"); // subsequent requests resolve normally
    scrubSlider(document.body, "rate", INFO.w / 2); // aborts the hanging call
    await initDone;
    await dash.settle();
    await vi.waitFor(() => {
      const est = document.querySelector('[data-role="estimate"]')!;
      expect(est.getAttribute("data-raw")).not.toBeNull();
    });
    // the hanging first request was aborted, not rendered: the displayed
    // value comes from the second call
    expect(server.calls["/confidence"]).toBe(2);
    expect(server.served.confidence.length).toBe(1);
    const shown = document.querySelector('[data-role="estimate"]')!.getAttribute("data-raw")!;
    expect(shown).toBe(String(server.served.confidence.at(-1)!.estimate));
  });

  it("the heatmap is fetched once per model and only the crosshair moves", async () => {
    const server = mockServer();
    const dash = new Dashboard(mount(), server.client, { debounceMs: 0 });
    await dash.init();
    await dash.settle();
    const tilesBefore = document.querySelectorAll("rect.heat-tile").length;

    for (const v of [0.001, 0.002, 0.004]) {
      scrubSlider(document.body, "rate", v);
      await dash.settle();
    }
    expect(server.calls["/heatmap"]).toBe(1);
    expect(document.querySelectorAll("rect.heat-tile").length).toBe(tilesBefore);
    expect(document.querySelector("line.crosshair-r")!.getAttribute("data-r")).toBe("0.004");
  });
});

describe("rendered values are verbatim server fields", () => {
  it("confidence readout equals the response estimate exactly", async () => {
    const server = mockServer({
      confidence: (r, h) => ({ r, h, estimate: 0.8765432109876543, stderr: 0.0009765625 }),
    });
    const dash = new Dashboard(mount(), server.client, { debounceMs: 0 });
    await dash.init();
    await dash.settle();
    const est = document.querySelector('[data-role="estimate"]')!;
    expect(est.textContent).toBe("0.8765432109876543");
    expect(est.getAttribute("data-raw")).toBe(String(0.8765432109876543));
    expect(document.querySelector('[data-role="stderr"]')!.textContent).toBe("± 0.0009765625");
  });

  it("every curve marker carries the exact server estimate", async () => {
    const server = mockServer();
    const dash = new Dashboard(mount(), server.client, { debounceMs: 0 });
    await dash.init();
    await dash.settle();
    const markers = [...document.querySelectorAll("circle.curve-marker")];
    expect(markers.length).toBe(65);
    const curveUrl = server.urls.find((u) => u.includes("/curve"))!;
    const h = Number(new URL(curveUrl).searchParams.get("h"));
    markers.forEach((m, i) => {
      const expected = Math.min(0.05 + (0.9 * i) / 64, 1);
      expect(m.getAttribute("data-estimate")).toBe(String(expected));
      expect(Number(m.getAttribute("data-r"))).toBeCloseTo((INFO.w * i) / 64, 15);
    });
    expect(Number.isFinite(h)).toBe(true);
  });

  it("heatmap tiles carry the exact server values", async () => {
    const server = mockServer();
    const dash = new Dashboard(mount(), server.client, { debounceMs: 0, heatmapSize: 5 });
    await dash.init();
    await dash.settle();
    const tiles = [...document.querySelectorAll("rect.heat-tile")];
    expect(tiles.length).toBe(25);
    const expected = Math.min((0 / 5 + 0 / 5) / 2 + 0.05, 1);
    expect(tiles[0]!.getAttribute("data-value")).toBe(String(expected));
  });
});

describe("chart geometry contracts", () => {
  it("axis extents equal the server-reported grids", async () => {
    const server = mockServer();
    const dash = new Dashboard(mount(), server.client, { debounceMs: 0, heatmapSize: 9 });
    await dash.init();
    await dash.settle();
    const curve = document.querySelector("svg.curve-chart")!;
    expect(curve.getAttribute("data-r-min")).toBe("0");
    expect(curve.getAttribute("data-r-max")).toBe(String(INFO.w));
    const heat = document.querySelector("svg.heatmap-chart")!;
    expect(heat.getAttribute("data-r-min")).toBe("0");
    expect(heat.getAttribute("data-r-max")).toBe(String(INFO.w));
    expect(heat.getAttribute("data-h-min")).toBe(String(INFO.head_range[0]));
    expect(heat.getAttribute("data-h-max")).toBe(String(INFO.head_range[1]));
  });

  it("a single-point curve renders one marker", async () => {
    const server = mockServer({ curvePoints: 1 });
    const dash = new Dashboard(mount(), server.client, { debounceMs: 0, curvePoints: 1 });
    await dash.init();
    await dash.settle();
    expect(document.querySelectorAll("circle.curve-marker").length).toBe(1);
    expect(document.querySelectorAll("path.curve-line").length).toBe(0);
  });

  it("crosshair tracks the sliders exactly", async () => {
    const server = mockServer();
    const dash = new Dashboard(mount(), server.client, { debounceMs: 0 });
    await dash.init();
    await dash.settle();
    scrubSlider(document.body, "rate", 0.0123);
    scrubSlider(document.body, "threshold", 0.0045);
    await dash.settle();
    expect(document.querySelector("line.crosshair-r")!.getAttribute("data-r")).toBe("0.0123");
    expect(document.querySelector("line.crosshair-h")!.getAttribute("data-h")).toBe("0.0045");
    expect(document.querySelector("line.current-rate")!.getAttribute("data-r")).toBe("0.0123");
  });

  it("the min-rate marker shows the server rate", async () => {
    const server = mockServer();
    const dash = new Dashboard(mount(), server.client, { debounceMs: 0 });
    await dash.init();
    await dash.settle();
    expect(document.querySelector('[data-role="min-rate"]')!.textContent).toBe(String(INFO.w / 4));
    expect(document.querySelector("line.min-rate-marker")!.getAttribute("data-rate")).toBe(String(INFO.w / 4));
  });

  it("empty curve data renders a placeholder", async () => {
    const server = mockServer({ curvePoints: 0 });
    const dash = new Dashboard(mount(), server.client, { debounceMs: 0, curvePoints: 0 });
    await dash.init();
    await dash.settle();
    expect(document.querySelector('[data-role="curve"] .placeholder')).not.toBeNull();
  });
});

describe("errors", () => {
  it("a 4xx response is rendered inline", async () => {
    const server = mockServer({ confidence: () => ({ status: 422, detail: "rate outside [0, w]" }) });
    const dash = new Dashboard(mount(), server.client, { debounceMs: 0 });
    await dash.init();
    await dash.settle();
    const err = document.querySelector('[data-role="error"]')!;
    expect(err.classList.contains("hidden")).toBe(false);
    expect(err.textContent).toContain("rate outside [0, w]");
  });
});

describe("URL state", () => {
  it("serialize/parse round-trips bit for bit", () => {
    const states = [
      { rate: 0.0123456789, threshold: -0.0009765625, target: 0.9 },
      { rate: INFO.w, threshold: 0.012, target: 0.5 },
      { rate: 1 / 3, threshold: Math.PI / 1000, target: 0.99 },
    ];
    for (const s of states) {
      expect(parseState(serializeState(s), { rate: 0, threshold: 0, target: 0 })).toEqual(s);
    }
  });

  it("the dashboard republishes its state and restores it on reload", async () => {
    let lastQs = "";
    const server = mockServer();
    const dash = new Dashboard(mount(), server.client, {
      debounceMs: 0,
      onStateSerialized: (qs) => (lastQs = qs),
    });
    await dash.init();
    await dash.settle();
    scrubSlider(document.body, "rate", 0.0201);
    scrubSlider(document.body, "threshold", 0.0071);
    await dash.settle();
    const saved = lastQs;

    document.body.replaceChildren();
    const dash2 = new Dashboard(mount(), mockServer().client, { debounceMs: 0 });
    await dash2.init("?" + saved);
    await dash2.settle();
    expect(dash2.state).toEqual(dash.state);
    expect(serializeState(dash2.state)).toBe(saved);
  });
});
