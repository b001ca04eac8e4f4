/**
 * Evaluation dashboard: metric tables, token-usage bars, per-item
 * drill-down, error flags, and the sweep comparison chart.
 *
 * Like the trace renderers these are pure VNode builders over the report
 * and sweep-summary wire formats; the chart is plain inline SVG (one
 * polyline per metric against the swept axis).
 */

import type { Report, SweepSummary } from "./types.js";
import { h, type VNode } from "./render.js";

function formatValue(value: number): string {
  return value.toFixed(4);
}

/** One row per aggregate metric. */
export function renderMetricTable(aggregate: Record<string, number>): VNode {
  const names = Object.keys(aggregate).sort();
  const rows = names.map((name) =>
    h(
      "tr",
      { class: "metric-row", "data-metric": name },
      h("td", { class: "metric-name" }, name),
      h("td", { class: "metric-value" }, formatValue(aggregate[name] as number)),
    ),
  );
  return h(
    "table",
    { class: "metric-table" },
    h("thead", {}, h("tr", {}, h("th", {}, "metric"), h("th", {}, "value"))),
    h("tbody", {}, ...rows),
  );
}

/** Horizontal bars of prompt/generated token totals, scaled to the max. */
export function renderTokenUsageBars(usage: Report["token_usage"]): VNode {
  const entries = Object.entries(usage.totals);
  const max = Math.max(1, ...entries.map(([, count]) => Math.abs(count)));
  const bars = entries.map(([name, count]) =>
    h(
      "div",
      { class: "usage-bar", "data-usage": name },
      h("span", { class: "usage-name" }, name),
      h("div", {
        class: "bar",
        style: `width: ${((Math.abs(count) / max) * 100).toFixed(1)}%`,
      }),
      h("span", { class: "usage-count" }, String(count)),
    ),
  );
  return h("div", { class: "token-usage-bars" }, ...bars);
}

/**
 * Per-item metric rows. Items that failed are listed from the report's
 * error list, flagged, and show the recorded error instead of metrics.
 * `data-item-id` is the drill-down key into the run's trace view.
 */
export function renderPerItemTable(report: Report): VNode {
  const metricNames = Object.keys(report.aggregate).sort();
  const header = h(
    "tr",
    {},
    h("th", {}, "item"),
    ...metricNames.map((name) => h("th", {}, name)),
  );
  const rows = Object.entries(report.per_item).map(([itemId, values]) =>
    h(
      "tr",
      { class: "item-row", "data-item-id": itemId },
      h("td", { class: "item-id" }, itemId),
      ...metricNames.map((name) => {
        const value = values[name];
        return h("td", { class: "metric-value" }, value === undefined ? "—" : formatValue(value));
      }),
    ),
  );
  const errorRows = report.errors.map((entry) =>
    h(
      "tr",
      { class: "item-row error-row flagged", "data-item-id": entry.item_id },
      h("td", { class: "item-id" }, entry.item_id),
      h("td", { class: "item-error", colspan: String(Math.max(1, metricNames.length)) }, entry.error),
    ),
  );
  return h(
    "table",
    { class: "per-item-table" },
    h("thead", {}, header),
    h("tbody", {}, ...rows, ...errorRows),
  );
}

/**
 * Sweep comparison chart: metric value vs. swept axis value, one polyline
 * per metric, with the raw numbers repeated in a table underneath.
 */
export function renderSweepChart(summary: SweepSummary, width = 480, height = 240): VNode {
  const metricNames = [...new Set(summary.rows.flatMap((row) => Object.keys(row.aggregate)))].sort();
  const xs = summary.rows.map((row) => Number(row.value));
  const xMin = Math.min(...xs);
  const xMax = Math.max(...xs);
  const pad = 28;
  const spanX = xMax - xMin || 1;
  const toX = (value: number) => pad + ((value - xMin) / spanX) * (width - 2 * pad);
  const toY = (value: number) => height - pad - Math.max(0, Math.min(1, value)) * (height - 2 * pad);

  const lines = metricNames.map((name, index) => {
    const points = summary.rows
      .map((row) => {
        const value = row.aggregate[name];
        return value === undefined ? null : `${toX(Number(row.value)).toFixed(1)},${toY(value).toFixed(1)}`;
      })
      .filter((point): point is string => point !== null)
      .join(" ");
    return h("polyline", {
      class: `sweep-line metric-${name}`,
      "data-metric": name,
      points,
      fill: "none",
      stroke: `hsl(${(index * 67) % 360} 60% 45%)`,
      "stroke-width": "2",
    });
  });
  const axis = h("line", {
    class: "x-axis",
    x1: String(pad),
    y1: String(height - pad),
    x2: String(width - pad),
    y2: String(height - pad),
    stroke: "#888",
  });
  const ticks = summary.rows.map((row) =>
    h(
      "text",
      {
        class: "x-tick",
        x: toX(Number(row.value)).toFixed(1),
        y: String(height - 8),
        "text-anchor": "middle",
        "font-size": "11",
      },
      String(row.value),
    ),
  );

  const tableRows = summary.rows.map((row) =>
    h(
      "tr",
      { class: "sweep-row", "data-value": String(row.value), "data-run-id": row.run_id },
      h("td", { class: "axis-value" }, String(row.value)),
      ...metricNames.map((name) => {
        const value = row.aggregate[name];
        return h("td", { class: "metric-value" }, value === undefined ? "—" : formatValue(value));
      }),
    ),
  );

  return h(
    "div",
    { class: "sweep-chart", "data-axis": summary.axis },
    h("h3", {}, `sweep over ${summary.axis}`),
    h(
      "svg",
      { viewBox: `0 0 ${width} ${height}`, width: String(width), height: String(height) },
      axis,
      ...lines,
      ...ticks,
    ),
    h(
      "table",
      { class: "sweep-table" },
      h(
        "thead",
        {},
        h("tr", {}, h("th", {}, summary.axis), ...metricNames.map((name) => h("th", {}, name))),
      ),
      h("tbody", {}, ...tableRows),
    ),
  );
}

/** The full dashboard for a finished run. */
export function renderDashboard(report: Report): VNode {
  return h(
    "div",
    { class: "dashboard" },
    h("h2", {}, "evaluation"),
    renderMetricTable(report.aggregate),
    renderTokenUsageBars(report.token_usage),
    renderPerItemTable(report),
  );
}
