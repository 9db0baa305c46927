/** SVG rendering for the confidence curve and the rate/threshold heatmap.
 *
 * Every number shown to the operator (tooltips, data-* attributes used by
 * the tests) is the exact string form of a server response field; scale
 * math is used only for pixel positions and colors.
 */

import type { ConfidencePoint, HeatmapDoc } from "./api.js";

const SVG_NS = "http://www.w3.org/2000/svg";

const CURVE_W = 520;
const CURVE_H = 260;
const PAD = 36;

function svgEl<K extends string>(doc: Document, tag: K, attrs: Record<string, string>): SVGElement {
  const el = doc.createElementNS(SVG_NS, tag) as SVGElement;
  for (const [k, v] of Object.entries(attrs)) el.setAttribute(k, v);
  return el;
}

function linScale(domainLo: number, domainHi: number, rangeLo: number, rangeHi: number) {
  const span = domainHi - domainLo || 1;
  return (v: number) => rangeLo + ((v - domainLo) / span) * (rangeHi - rangeLo);
}

export interface CurveDecorations {
  target: number;
  minRate: number | null;
  currentRate: number;
}

export function renderCurve(container: HTMLElement, rows: ConfidencePoint[], deco: CurveDecorations): void {
  const doc = container.ownerDocument;
  container.replaceChildren();
  if (rows.length === 0) {
    const p = doc.createElement("p");
    p.className = "placeholder";
    p.textContent = "no curve data";
    container.appendChild(p);
    return;
  }
  const svg = svgEl(doc, "svg", {
    viewBox: `0 0 ${CURVE_W} ${CURVE_H}`,
    class: "curve-chart",
    "data-r-min": String(rows[0]!.r),
    "data-r-max": String(rows[rows.length - 1]!.r),
    "data-points": String(rows.length),
  });
  const x = linScale(rows[0]!.r, rows[rows.length - 1]!.r, PAD, CURVE_W - PAD);
  const y = linScale(0, 1, CURVE_H - PAD, PAD);

  svg.appendChild(svgEl(doc, "line", { x1: String(PAD), y1: String(y(0)), x2: String(CURVE_W - PAD), y2: String(y(0)), class: "axis" }));
  svg.appendChild(svgEl(doc, "line", { x1: String(PAD), y1: String(y(0)), x2: String(PAD), y2: String(y(1)), class: "axis" }));

  if (rows.length > 1) {
    const d = rows.map((p, i) => `${i ? "L" : "M"}${x(p.r).toFixed(2)},${y(p.estimate).toFixed(2)}`).join(" ");
    svg.appendChild(svgEl(doc, "path", { d, class: "curve-line", fill: "none" }));
  }
  for (const p of rows) {
    const c = svgEl(doc, "circle", {
      cx: x(p.r).toFixed(2),
      cy: y(p.estimate).toFixed(2),
      r: "3",
      class: "curve-marker",
      "data-r": String(p.r),
      "data-estimate": String(p.estimate),
    });
    const title = svgEl(doc, "title", {});
    title.textContent = `r=${String(p.r)} estimate=${String(p.estimate)}`;
    c.appendChild(title);
    svg.appendChild(c);
  }

  svg.appendChild(
    svgEl(doc, "line", {
      x1: String(PAD), x2: String(CURVE_W - PAD),
      y1: y(deco.target).toFixed(2), y2: y(deco.target).toFixed(2),
      class: "target-rule", "data-target": String(deco.target),
    }),
  );
  if (deco.minRate !== null) {
    svg.appendChild(
      svgEl(doc, "line", {
        x1: x(deco.minRate).toFixed(2), x2: x(deco.minRate).toFixed(2),
        y1: String(y(0)), y2: String(y(1)),
        class: "min-rate-marker", "data-rate": String(deco.minRate),
      }),
    );
  }
  svg.appendChild(
    svgEl(doc, "line", {
      x1: x(deco.currentRate).toFixed(2), x2: x(deco.currentRate).toFixed(2),
      y1: String(y(0)), y2: String(y(1)),
      class: "current-rate", "data-r": String(deco.currentRate),
    }),
  );
  container.appendChild(svg);
}

const HEAT_W = 520;
const HEAT_H = 330;

/** Blue-to-red two-stop ramp; confidence 1 is calm blue, 0 is alarm red. */
function heatColor(v: number): string {
  const t = Math.min(Math.max(v, 0), 1);
  const r = Math.round(200 * (1 - t) + 30 * t);
  const g = Math.round(60 * (1 - t) + 110 * t);
  const b = Math.round(50 * (1 - t) + 200 * t);
  return `rgb(${r},${g},${b})`;
}

export function renderHeatmap(container: HTMLElement, doc_: HeatmapDoc | null, crosshair: { rate: number; threshold: number }): void {
  const doc = container.ownerDocument;
  container.replaceChildren();
  if (!doc_ || doc_.r_grid.length === 0 || doc_.h_grid.length === 0) {
    const p = doc.createElement("p");
    p.className = "placeholder";
    p.textContent = "no heatmap data";
    container.appendChild(p);
    return;
  }
  const { r_grid, h_grid, values } = doc_;
  const svg = svgEl(doc, "svg", {
    viewBox: `0 0 ${HEAT_W} ${HEAT_H}`,
    class: "heatmap-chart",
    "data-r-min": String(r_grid[0]),
    "data-r-max": String(r_grid[r_grid.length - 1]),
    "data-h-min": String(h_grid[0]),
    "data-h-max": String(h_grid[h_grid.length - 1]),
  });
  const x = linScale(r_grid[0]!, r_grid[r_grid.length - 1]!, PAD, HEAT_W - PAD);
  const y = linScale(h_grid[0]!, h_grid[h_grid.length - 1]!, HEAT_H - PAD, PAD);
  const cellW = (HEAT_W - 2 * PAD) / Math.max(r_grid.length - 1, 1);
  const cellH = (HEAT_H - 2 * PAD) / Math.max(h_grid.length - 1, 1);

  for (let i = 0; i < r_grid.length; i++) {
    for (let j = 0; j < h_grid.length; j++) {
      const v = values[i]![j]!;
      const rect = svgEl(doc, "rect", {
        x: (x(r_grid[i]!) - cellW / 2).toFixed(2),
        y: (y(h_grid[j]!) - cellH / 2).toFixed(2),
        width: cellW.toFixed(2),
        height: cellH.toFixed(2),
        fill: heatColor(v),
        class: "heat-tile",
        "data-value": String(v),
      });
      const title = svgEl(doc, "title", {});
      title.textContent = `r=${String(r_grid[i])} h=${String(h_grid[j])} estimate=${String(v)}`;
      rect.appendChild(title);
      svg.appendChild(rect);
    }
  }
  svg.appendChild(
    svgEl(doc, "line", {
      x1: x(crosshair.rate).toFixed(2), x2: x(crosshair.rate).toFixed(2),
      y1: String(PAD), y2: String(HEAT_H - PAD),
      class: "crosshair crosshair-r", "data-r": String(crosshair.rate),
    }),
  );
  svg.appendChild(
    svgEl(doc, "line", {
      x1: String(PAD), x2: String(HEAT_W - PAD),
      y1: y(crosshair.threshold).toFixed(2), y2: y(crosshair.threshold).toFixed(2),
      class: "crosshair crosshair-h", "data-h": String(crosshair.threshold),
    }),
  );
  container.appendChild(svg);
}

/** Move an existing crosshair without re-rendering the tiles. */
export function updateCrosshair(container: HTMLElement, doc_: HeatmapDoc, crosshair: { rate: number; threshold: number }): boolean {
  const vert = container.querySelector<SVGLineElement>("line.crosshair-r");
  const horiz = container.querySelector<SVGLineElement>("line.crosshair-h");
  if (!vert || !horiz) return false;
  const { r_grid, h_grid } = doc_;
  const x = linScale(r_grid[0]!, r_grid[r_grid.length - 1]!, PAD, HEAT_W - PAD);
  const y = linScale(h_grid[0]!, h_grid[h_grid.length - 1]!, HEAT_H - PAD, PAD);
  vert.setAttribute("x1", x(crosshair.rate).toFixed(2));
  vert.setAttribute("x2", x(crosshair.rate).toFixed(2));
  vert.setAttribute("data-r", String(crosshair.rate));
  horiz.setAttribute("y1", y(crosshair.threshold).toFixed(2));
  horiz.setAttribute("y2", y(crosshair.threshold).toFixed(2));
  horiz.setAttribute("data-h", String(crosshair.threshold));
  return true;
}
