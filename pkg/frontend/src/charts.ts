/** Hand-rolled SVG line charts for the monthly metrics.
 *
 * Months with a null value are rendered as gaps in the line, never as
 * zero: a missing agreement number means "no verdicts that month", not
 * "agreement was zero".
 */

import type { MonthlyRow } from "./api.js";

const SVG_NS = "http://www.w3.org/2000/svg";
const WIDTH = 560;
const HEIGHT = 220;
const PAD = { left: 48, right: 16, top: 16, bottom: 28 };

interface Point {
  month: number;
  value: number;
}

function svgEl<K extends keyof SVGElementTagNameMap>(
  tag: K,
  attrs: Record<string, string>,
): SVGElementTagNameMap[K] {
  const el = document.createElementNS(SVG_NS, tag);
  for (const [k, v] of Object.entries(attrs)) {
    el.setAttribute(k, v);
  }
  return el;
}

/** Split consecutive non-null points into polyline segments. */
function segments(rows: MonthlyRow[], key: "majors_per_10k" | "man_machine_agreement"): Point[][] {
  const segs: Point[][] = [];
  let current: Point[] = [];
  for (const row of rows) {
    const value = row[key];
    if (value === null || value === undefined) {
      if (current.length > 0) segs.push(current);
      current = [];
    } else {
      current.push({ month: row.month, value });
    }
  }
  if (current.length > 0) segs.push(current);
  return segs;
}

export function renderMetricChart(
  rows: MonthlyRow[],
  key: "majors_per_10k" | "man_machine_agreement",
  title: string,
): SVGSVGElement {
  const svg = svgEl("svg", {
    viewBox: `0 0 ${WIDTH} ${HEIGHT}`,
    width: String(WIDTH),
    height: String(HEIGHT),
    class: `metric-chart chart-${key}`,
    role: "img",
    "aria-label": title,
  });

  const segs = segments(rows, key);
  const values = segs.flat().map((p) => p.value);
  const months = rows.map((r) => r.month);
  if (values.length === 0 || months.length === 0) {
    const note = svgEl("text", {
      x: String(WIDTH / 2),
      y: String(HEIGHT / 2),
      "text-anchor": "middle",
      class: "chart-empty",
    });
    note.textContent = "no data";
    svg.append(note);
    return svg;
  }

  const minMonth = Math.min(...months);
  const maxMonth = Math.max(...months);
  const maxValue = Math.max(...values, 0);
  const minValue = Math.min(...values, 0);
  const spanX = Math.max(maxMonth - minMonth, 1);
  const spanY = Math.max(maxValue - minValue, 1e-9);
  const x = (m: number) =>
    PAD.left + ((m - minMonth) / spanX) * (WIDTH - PAD.left - PAD.right);
  const y = (v: number) =>
    HEIGHT - PAD.bottom - ((v - minValue) / spanY) * (HEIGHT - PAD.top - PAD.bottom);

  // axes
  svg.append(
    svgEl("line", {
      x1: String(PAD.left), y1: String(HEIGHT - PAD.bottom),
      x2: String(WIDTH - PAD.right), y2: String(HEIGHT - PAD.bottom),
      class: "axis",
    }),
    svgEl("line", {
      x1: String(PAD.left), y1: String(PAD.top),
      x2: String(PAD.left), y2: String(HEIGHT - PAD.bottom),
      class: "axis",
    }),
  );

  for (const m of months) {
    const label = svgEl("text", {
      x: String(x(m)),
      y: String(HEIGHT - PAD.bottom + 18),
      "text-anchor": "middle",
      class: "tick-label",
    });
    label.textContent = String(m);
    svg.append(label);
  }
  for (const v of [minValue, maxValue]) {
    const label = svgEl("text", {
      x: String(PAD.left - 6),
      y: String(y(v) + 4),
      "text-anchor": "end",
      class: "tick-label",
    });
    label.textContent = String(v);
    svg.append(label);
  }

  for (const seg of segs) {
    if (seg.length > 1) {
      svg.append(
        svgEl("polyline", {
          points: seg.map((p) => `${x(p.month)},${y(p.value)}`).join(" "),
          class: "series-line",
          fill: "none",
        }),
      );
    }
    for (const p of seg) {
      const dot = svgEl("circle", {
        cx: String(x(p.month)),
        cy: String(y(p.value)),
        r: "3.5",
        class: "series-point",
        "data-month": String(p.month),
        "data-value": String(p.value),
      });
      const tip = svgEl("title", {});
      tip.textContent = `month ${p.month}: ${String(p.value)}`;
      dot.append(tip);
      svg.append(dot);
    }
  }
  return svg;
}

export function renderCharts(container: HTMLElement, rows: MonthlyRow[]): void {
  container.replaceChildren();
  const specs: Array<["majors_per_10k" | "man_machine_agreement", string]> = [
    ["majors_per_10k", "Major incidents per 10,000 changes"],
    ["man_machine_agreement", "Man-machine agreement"],
  ];
  for (const [key, title] of specs) {
    const figure = document.createElement("figure");
    figure.className = "chart-figure";
    const caption = document.createElement("figcaption");
    caption.textContent = title;
    figure.append(caption, renderMetricChart(rows, key, title));
    container.append(figure);
  }
}
