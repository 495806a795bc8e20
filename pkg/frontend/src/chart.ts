/** Harvest chart: cumulative labels over time, one polyline per book. */

import type { HarvestPayload, HarvestPoint } from "./api.js";

export interface ChartGeometry {
  width: number;
  height: number;
  pad: number;
}

export const DEFAULT_GEOMETRY: ChartGeometry = { width: 640, height: 220, pad: 34 };

const PALETTE = ["#2563eb", "#dc2626", "#059669", "#d97706", "#7c3aed", "#0891b2"];

export interface ChartLine {
  bookId: string;
  color: string;
  points: string;
}

/** Scale the series into SVG polyline point lists, grouped by book. */
export function harvestLines(
  series: HarvestPoint[],
  geom: ChartGeometry = DEFAULT_GEOMETRY,
): ChartLine[] {
  if (series.length === 0) return [];
  const t0 = Math.min(...series.map((p) => p.timestamp));
  const t1 = Math.max(...series.map((p) => p.timestamp));
  const yMax = Math.max(1, ...series.map((p) => p.cumulative_labels));
  const spanX = geom.width - 2 * geom.pad;
  const spanY = geom.height - 2 * geom.pad;
  const x = (t: number) => geom.pad + (t1 === t0 ? spanX / 2 : ((t - t0) / (t1 - t0)) * spanX);
  const y = (n: number) => geom.height - geom.pad - (n / yMax) * spanY;

  const byBook = new Map<string, HarvestPoint[]>();
  for (const p of series) {
    const group = byBook.get(p.book_id);
    if (group === undefined) byBook.set(p.book_id, [p]);
    else group.push(p);
  }
  return [...byBook.entries()].map(([bookId, points], i) => {
    const coords = points.map((p) => `${x(p.timestamp).toFixed(1)},${y(p.cumulative_labels).toFixed(1)}`);
    // a one-point series still needs a visible dash
    if (coords.length === 1) coords.push(`${(x(points[0]!.timestamp) + 2).toFixed(1)},${y(points[0]!.cumulative_labels).toFixed(1)}`);
    return {
      bookId,
      color: PALETTE[i % PALETTE.length] ?? "#2563eb",
      points: coords.join(" "),
    };
  });
}

const SVG_NS = "http://www.w3.org/2000/svg";

export function renderChart(
  doc: Document,
  payload: HarvestPayload,
  geom: ChartGeometry = DEFAULT_GEOMETRY,
): SVGSVGElement {
  const svg = doc.createElementNS(SVG_NS, "svg") as SVGSVGElement;
  svg.setAttribute("viewBox", `0 0 ${geom.width} ${geom.height}`);
  svg.setAttribute("width", String(geom.width));
  svg.setAttribute("height", String(geom.height));
  svg.setAttribute("class", "harvest-chart");
  svg.setAttribute("role", "img");

  const axis = doc.createElementNS(SVG_NS, "path");
  axis.setAttribute(
    "d",
    `M ${geom.pad} ${geom.pad} V ${geom.height - geom.pad} H ${geom.width - geom.pad}`,
  );
  axis.setAttribute("fill", "none");
  axis.setAttribute("stroke", "#94a3b8");
  svg.append(axis);

  const lines = harvestLines(payload.series, geom);
  lines.forEach((line, i) => {
    const poly = doc.createElementNS(SVG_NS, "polyline");
    poly.setAttribute("points", line.points);
    poly.setAttribute("fill", "none");
    poly.setAttribute("stroke", line.color);
    poly.setAttribute("stroke-width", "2");
    poly.setAttribute("data-book", line.bookId);
    svg.append(poly);

    const tag = doc.createElementNS(SVG_NS, "text");
    tag.setAttribute("x", String(geom.pad + 6));
    tag.setAttribute("y", String(geom.pad + 14 + i * 16));
    tag.setAttribute("fill", line.color);
    tag.setAttribute("font-size", "12");
    tag.textContent = line.bookId;
    svg.append(tag);
  });

  const yMax = Math.max(0, ...payload.series.map((p) => p.cumulative_labels));
  const caption = doc.createElementNS(SVG_NS, "text");
  caption.setAttribute("x", String(geom.width - geom.pad));
  caption.setAttribute("y", String(geom.pad - 8));
  caption.setAttribute("text-anchor", "end");
  caption.setAttribute("fill", "#64748b");
  caption.setAttribute("font-size", "12");
  caption.setAttribute("class", "chart-caption");
  caption.textContent =
    payload.series.length === 0
      ? "no labels yet"
      : `${yMax} labels, peak ${payload.peak_labels_per_minute.toFixed(0)}/min`;
  svg.append(caption);
  return svg;
}
