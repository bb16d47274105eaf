/**
 * Chart-option builders, one per figure id.
 *
 * Options are plain data (inspected by tests before rendering); every
 * builder disables animation so repeated renders are byte-identical.
 */

import type { EChartsOption, SeriesOption } from "echarts";

import {
  CsvTable,
  FigureId,
  QIllustration,
  numericColumn,
  requireColumns,
} from "./schemas.js";

const BASE: Partial<EChartsOption> = {
  animation: false,
  backgroundColor: "#ffffff",
  grid: { left: 70, right: 30, top: 50, bottom: 55 },
};

function groupRows(
  table: CsvTable,
  key: string,
): Map<string, Record<string, number | string>[]> {
  const groups = new Map<string, Record<string, number | string>[]>();
  for (const row of table.rows) {
    const label = String(row[key]);
    if (!groups.has(label)) groups.set(label, []);
    groups.get(label)!.push(row);
  }
  return groups;
}

function sortedPairs(
  rows: Record<string, number | string>[],
  xKey: string,
  yKey: string,
): [number, number][] {
  return rows
    .map((r) => [Number(r[xKey]), Number(r[yKey])] as [number, number])
    .sort((a, b) => a[0] - b[0]);
}

/** Improvement-versus-time with a 25th-75th percentile band and the
 * per-step prediction-power reference line. */
export function buildMgapsFigure(table: CsvTable, source: string, title: string): EChartsOption {
  requireColumns(table, ["t", "mean", "p25", "p75", "reference"], source);
  const t = numericColumn(table, "t");
  const mean = numericColumn(table, "mean");
  const p25 = numericColumn(table, "p25");
  const p75 = numericColumn(table, "p75");
  const reference = numericColumn(table, "reference")[0];

  const bandLower: SeriesOption = {
    name: "p25",
    type: "line",
    data: t.map((x, i) => [x, p25[i]]),
    lineStyle: { opacity: 0 },
    symbol: "none",
    stack: "band",
    silent: true,
  };
  const bandUpper: SeriesOption = {
    name: "p25-p75 band",
    type: "line",
    data: t.map((x, i) => [x, p75[i] - p25[i]]),
    lineStyle: { opacity: 0 },
    symbol: "none",
    stack: "band",
    areaStyle: { opacity: 0.25 },
    silent: true,
  };
  const meanLine: SeriesOption = {
    name: "mean improvement",
    type: "line",
    data: t.map((x, i) => [x, mean[i]]),
    symbol: "none",
    markLine: {
      silent: true,
      symbol: "none",
      lineStyle: { type: "dashed", width: 2 },
      label: { formatter: "P/T", position: "insideEndTop" },
      data: [{ yAxis: reference, name: "per-step prediction power" }],
    },
  };
  // keep the reference line inside the axis extent even when the series
  // never reaches it (short or diverging runs)
  const lo = Math.min(...p25, ...mean, reference, 0);
  const hi = Math.max(...p75, ...mean, reference);
  const pad = 0.08 * (hi - lo || 1);
  return {
    ...BASE,
    title: { text: title },
    legend: { top: 28 },
    xAxis: { type: "value", name: "time step" },
    yAxis: {
      type: "value",
      name: "average cost improvement",
      min: Number((lo - pad).toPrecision(6)),
      max: Number((hi + pad).toPrecision(6)),
    },
    series: [bandLower, bandUpper, meanLine],
  };
}

/** Per-entry prediction accuracy against the mixing coefficient. */
export function buildMseRhoFigure(table: CsvTable, source: string): EChartsOption {
  requireColumns(table, ["rho", "predictor", "mse_entry_0"], source);
  const entryCols = table.columns.filter((c) => c.startsWith("mse_entry_"));
  const series: SeriesOption[] = [];
  for (const [predictor, rows] of groupRows(table, "predictor")) {
    for (const col of entryCols) {
      series.push({
        name: `${predictor} ${col.replace("mse_", "")}`,
        type: "line",
        data: sortedPairs(rows, "rho", col),
      });
    }
  }
  return {
    ...BASE,
    title: { text: "Per-entry disturbance MSE vs rho" },
    legend: { top: 28 },
    xAxis: { type: "value", name: "rho" },
    yAxis: { type: "value", name: "test MSE" },
    series,
  };
}

/** Realized control cost against the mixing coefficient, with the
 * baseline level and the closed-form expectation overlaid. */
export function buildCostRhoFigure(table: CsvTable, source: string): EChartsOption {
  requireColumns(
    table,
    ["rho", "policy", "mean_cost", "power_closed_form"],
    source,
  );
  const series: SeriesOption[] = [];
  let baselineCost: number | null = null;
  for (const [policy, rows] of groupRows(table, "policy")) {
    if (policy === "no-prediction") {
      baselineCost = Number(rows[0]["mean_cost"]);
      continue;
    }
    series.push({
      name: policy,
      type: "line",
      data: sortedPairs(rows, "rho", "mean_cost"),
    });
  }
  if (baselineCost !== null) {
    for (const [policy, rows] of groupRows(table, "policy")) {
      if (policy === "no-prediction") continue;
      const theoretical = rows
        .map((r) => [Number(r["rho"]), baselineCost! - Number(r["power_closed_form"])] as [number, number])
        .sort((a, b) => a[0] - b[0]);
      series.push({
        name: `${policy} (baseline - closed-form power)`,
        type: "line",
        lineStyle: { type: "dashed" },
        symbol: "none",
        data: theoretical,
      });
    }
    series.push({
      name: "no-prediction",
      type: "line",
      lineStyle: { type: "dotted" },
      symbol: "none",
      data: [],
      markLine: {
        silent: true,
        symbol: "none",
        label: { formatter: "no-prediction", position: "insideEndTop" },
        data: [{ yAxis: baselineCost }],
      },
    });
  }
  return {
    ...BASE,
    title: { text: "Average control cost vs rho" },
    legend: { top: 28, type: "scroll" },
    xAxis: { type: "value", name: "rho" },
    yAxis: { type: "value", name: "mean total cost", scale: true },
    series,
  };
}

/** Expected one-step cost-to-go parabolas, evaluated analytically. */
export function buildQIllustrationFigure(doc: QIllustration): EChartsOption {
  const grid: number[] = [];
  for (let u = -2.5; u <= 2.5 + 1e-9; u += 0.05) grid.push(Number(u.toFixed(2)));
  const series: SeriesOption[] = doc.branches.map((b) => ({
    name: `informed, v = ${b.v}`,
    type: "line",
    symbol: "none",
    data: grid.map((u) => [u, (u - b.vertex_u) ** 2 + b.offset]),
  }));
  series.push({
    name: "uninformed",
    type: "line",
    symbol: "none",
    lineStyle: { type: "dashed" },
    data: grid.map((u) => [u, (u - doc.baseline.vertex_u) ** 2 + doc.baseline.offset]),
  });
  return {
    ...BASE,
    title: { text: "Expected cost-to-go vs action" },
    legend: { top: 28 },
    xAxis: { type: "value", name: "action u" },
    yAxis: { type: "value", name: "expected remaining cost" },
    series,
  };
}

/** Per-step prediction accuracy over the horizon for both predictors. */
export function buildMseTimeFigure(table: CsvTable, source: string): EChartsOption {
  requireColumns(table, ["t", "offset", "variant", "mse"], source);
  const series: SeriesOption[] = [];
  const byKey = new Map<string, Record<string, number | string>[]>();
  for (const row of table.rows) {
    const key = `variant ${row["variant"]}, target t+${row["offset"]}`;
    if (!byKey.has(key)) byKey.set(key, []);
    byKey.get(key)!.push(row);
  }
  for (const [name, rows] of byKey) {
    series.push({
      name,
      type: "line",
      symbol: "none",
      data: sortedPairs(rows, "t", "mse"),
    });
  }
  return {
    ...BASE,
    title: { text: "Per-step disturbance MSE over the horizon" },
    legend: { top: 28 },
    xAxis: { type: "value", name: "time step" },
    yAxis: { type: "value", name: "test MSE", scale: true },
    series,
  };
}

export const FIGURE_TITLES: Record<FigureId, string> = {
  "fig1-mgaps-current": "Online tuning with the current-step prediction",
  "fig2-mgaps-next": "Online tuning with the one-step-ahead prediction",
  "fig3-mse-rho": "Per-entry MSE vs rho",
  "fig4-cost-rho": "Control cost vs rho",
  "fig5-q-illustration": "Expected cost-to-go illustration",
  "fig6-mse-time": "Per-step MSE over time",
};
