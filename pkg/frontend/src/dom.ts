// Small DOM + SVG helpers. Rendering only: all numbers come from the service.

export function h(
  tag: string,
  attrs: Record<string, string> = {},
  children: Array<Node | string> = [],
): HTMLElement {
  const el = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) el.setAttribute(key, value);
  for (const child of children) el.append(child);
  return el;
}

export function clear(el: Element): void {
  while (el.firstChild) el.removeChild(el.firstChild);
}

const SVG_NS = "http://www.w3.org/2000/svg";

/** Polyline sparkline of a numeric series (e.g. the entropy trace). */
export function sparkline(values: number[], width = 160, height = 36): SVGSVGElement {
  const svg = document.createElementNS(SVG_NS, "svg");
  svg.setAttribute("class", "sparkline");
  svg.setAttribute("viewBox", `0 0 ${width} ${height}`);
  svg.setAttribute("data-points", String(values.length));
  const max = Math.max(...values, 1e-9);
  const step = values.length > 1 ? width / (values.length - 1) : 0;
  const points = values
    .map((v, i) => `${(i * step).toFixed(2)},${(height - 2 - (v / max) * (height - 4)).toFixed(2)}`)
    .join(" ");
  const line = document.createElementNS(SVG_NS, "polyline");
  line.setAttribute("points", values.length === 1 ? `0,${height - 2} ${width},${height - 2}` : points);
  line.setAttribute("fill", "none");
  svg.append(line);
  return svg;
}

/** Horizontal bar chart; one row per (label, value in [0, 1]). */
export function barChart(rows: Array<{ label: string; value: number; highlight?: boolean }>): HTMLElement {
  const chart = h("div", { class: "bar-chart" });
  for (const row of rows) {
    const bar = h("div", { class: "bar-row" + (row.highlight ? " highlight" : "") });
    bar.append(h("span", { class: "bar-label" }, [row.label]));
    const track = h("div", { class: "bar-track" });
    const fill = h("div", { class: "bar-fill" });
    fill.style.width = `${(row.value * 100).toFixed(1)}%`;
    track.append(fill);
    bar.append(track);
    bar.append(h("span", { class: "bar-value" }, [row.value.toFixed(3)]));
    chart.append(bar);
  }
  return chart;
}

/** Budget gauge: used/total with a refresh warning when exhausted. */
export function gauge(used: number, total: number, warnText: string): HTMLElement {
  const wrap = h("div", { class: "gauge", "data-used": String(used), "data-total": String(total) });
  const track = h("div", { class: "gauge-track" });
  const fill = h("div", { class: "gauge-fill" });
  fill.style.width = total > 0 ? `${Math.min(100, (used / total) * 100).toFixed(1)}%` : "0%";
  track.append(fill);
  wrap.append(track);
  wrap.append(h("span", { class: "gauge-text" }, [`${used} / ${total}`]));
  if (total > 0 && used >= total) {
    wrap.append(h("span", { class: "gauge-warning" }, [warnText]));
  }
  return wrap;
}
