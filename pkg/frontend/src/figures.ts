// One echarts option builder per figure kind.  Everything plotted is a column
// read verbatim from the CSVs; the only arithmetic is for display (error-band
// edges, axis placement), never refitting or aggregation.

import type { EChartsOption } from "echarts";
import { Table, densityFamily, num, requireColumns, requireRows } from "./table.js";

export interface AxisOptions {
  title?: string;
  logX?: boolean;
  logY?: boolean;
}

const FLUCTUATION_COLS = ["target", "n", "count", "excluded", "mean", "sd", "tail_freq"];
const SLOPE_COLS = ["target", "slope", "slope_stderr", "ci_low", "ci_high", "points"];
const CONTINUITY_COLS = ["kind", "grid_value", "count", "estimate", "stderr", "jump_ok"];
const MAX_JUMP_COLS = ["n", "count", "q50", "q90", "q100", "fraction_within_band"];
const HD_COLS = ["p", "count", "infeasible", "phi", "stderr", "rescaled", "log_slope"];

function base(title: string | undefined, fallback: string): EChartsOption {
  return {
    animation: false,
    title: { text: title ?? fallback, left: "center" },
    legend: { bottom: 0 },
    grid: { left: 70, right: 70, top: 60, bottom: 60 },
  };
}

function groupBy(rows: Record<string, string>[], col: string): Map<string, Record<string, string>[]> {
  const groups = new Map<string, Record<string, string>[]>();
  for (const row of rows) {
    const key = row[col];
    if (!groups.has(key)) groups.set(key, []);
    groups.get(key)!.push(row);
  }
  return groups;
}

// log-log sd vs n, one series per target, slope annotation copied verbatim
// from the slope table (the renderer never fits anything).
export function fluctuationOption(fluct: Table, slope: Table | undefined, axis: AxisOptions): EChartsOption {
  requireColumns(fluct, FLUCTUATION_COLS);
  requireRows(fluct);
  const series: object[] = [];
  for (const [target, rows] of groupBy(fluct.rows, "target")) {
    series.push({
      name: target,
      type: "line",
      symbolSize: 7,
      data: rows.map((r) => [num(r, "n"), num(r, "sd")]),
    });
  }
  const annotations: string[] = [];
  if (slope !== undefined) {
    requireColumns(slope, SLOPE_COLS);
    for (const row of slope.rows) {
      annotations.push(`${row["target"]} slope = ${row["slope"]}`);
    }
  }
  const option = base(axis.title, "fluctuation growth");
  option.xAxis = { type: axis.logX === false ? "value" : "log", name: "n" };
  option.yAxis = { type: axis.logY === false ? "value" : "log", name: "sd" };
  option.series = series as EChartsOption["series"];
  if (annotations.length > 0) {
    option.graphic = [
      {
        type: "text",
        right: 80,
        top: 70,
        style: { text: annotations.join("\n"), fontSize: 14, fill: "#333" },
      },
    ];
  }
  return option;
}

function continuityRows(table: Table, kind: string): Record<string, string>[] {
  requireColumns(table, CONTINUITY_COLS);
  requireRows(table);
  for (const row of table.rows) {
    if (row["kind"] !== kind) {
      throw new Error(`${table.path}: expected a ${kind}-continuity table, found kind=${row["kind"]}`);
    }
  }
  return table.rows;
}

// mu_hat vs p with a +-1 stderr band (band edges are column arithmetic, the
// estimate itself is plotted untouched).
export function timeConstantOption(curve: Table, axis: AxisOptions): EChartsOption {
  const rows = continuityRows(curve, "p");
  const xs = rows.map((r) => num(r, "grid_value"));
  const est = rows.map((r) => num(r, "estimate"));
  const se = rows.map((r) => num(r, "stderr"));
  const option = base(axis.title, "time constant vs p");
  option.xAxis = { type: axis.logX ? "log" : "value", name: "p" };
  option.yAxis = { type: axis.logY ? "log" : "value", name: "mu_hat", scale: true };
  option.series = [
    {
      name: "band lower",
      type: "line",
      data: xs.map((x, i) => [x, est[i] - se[i]]),
      lineStyle: { opacity: 0 },
      stack: "band",
      symbol: "none",
      silent: true,
    },
    {
      name: "+-1 se",
      type: "line",
      data: xs.map((x, i) => [x, 2 * se[i]]),
      lineStyle: { opacity: 0 },
      stack: "band",
      symbol: "none",
      areaStyle: { opacity: 0.25 },
      silent: true,
    },
    {
      name: "mu_hat",
      type: "line",
      symbolSize: 7,
      data: xs.map((x, i) => [x, est[i]]),
    },
  ] as EChartsOption["series"];
  return option;
}

// phi_hat over a (beta, p) grid assembled from per-density beta strips.
export function freeEnergyHeatmapOption(strips: Table[], axis: AxisOptions): EChartsOption {
  if (strips.length < 2) throw new Error("heatmap needs at least two beta strips");
  const ps = densityFamily(strips);
  const grids = strips.map((t) => continuityRows(t, "beta").map((r) => r["grid_value"]));
  const betaLabels = grids[0];
  for (let i = 1; i < grids.length; i++) {
    if (grids[i].join("|") !== betaLabels.join("|")) {
      throw new Error(`${strips[i].path}: strips must share the beta grid`);
    }
  }
  const order = ps.map((p, i) => i).sort((a, b) => ps[a] - ps[b]);
  const data: [number, number, number][] = [];
  let lo = Infinity;
  let hi = -Infinity;
  order.forEach((stripIdx, yi) => {
    strips[stripIdx].rows.forEach((row, xi) => {
      const v = num(row, "estimate");
      data.push([xi, yi, v]);
      if (v < lo) lo = v;
      if (v > hi) hi = v;
    });
  });
  const option = base(axis.title, "free energy per layer");
  option.xAxis = { type: "category", data: betaLabels, name: "beta" };
  option.yAxis = { type: "category", data: order.map((i) => String(ps[i])), name: "p" };
  option.visualMap = {
    min: lo,
    max: hi,
    calculable: false,
    orient: "vertical",
    right: 10,
    top: "center",
  };
  option.series = [
    {
      name: "phi_hat",
      type: "heatmap",
      data,
      label: { show: true, formatter: (p: { data: [number, number, number] }) => p.data[2].toFixed(3) },
    },
  ] as EChartsOption["series"];
  return option;
}

// fraction of replicas whose largest jump stays inside the n^zeta band, with
// the jump quantiles on a second axis.
export function maxJumpOption(table: Table, axis: AxisOptions): EChartsOption {
  requireColumns(table, MAX_JUMP_COLS);
  requireRows(table);
  const rows = table.rows;
  const option = base(axis.title, "largest jump vs n");
  option.xAxis = { type: axis.logX === false ? "value" : "log", name: "n" };
  option.yAxis = [
    { type: "value", name: "fraction within band", min: 0, max: 1 },
    { type: axis.logY ? "log" : "value", name: "jump quartiles" },
  ];
  const quantile = (col: string) => ({
    name: col,
    type: "line",
    yAxisIndex: 1,
    lineStyle: { type: "dashed" },
    symbolSize: 5,
    data: rows.map((r) => [num(r, "n"), num(r, col)]),
  });
  option.series = [
    {
      name: "within band",
      type: "line",
      symbolSize: 7,
      data: rows.map((r) => [num(r, "n"), num(r, "fraction_within_band")]),
    },
    quantile("q50"),
    quantile("q90"),
    quantile("q100"),
  ] as EChartsOption["series"];
  return option;
}

// rescaled free energy against density: flattening of the rescaled curve is
// the trend of interest, the raw phi_hat is shown dashed for contrast.
export function hdTrendOption(table: Table, axis: AxisOptions): EChartsOption {
  requireColumns(table, HD_COLS);
  requireRows(table);
  const rows = table.rows;
  const option = base(axis.title, "high-density trend");
  option.xAxis = { type: axis.logX ? "log" : "value", name: "p" };
  option.yAxis = [
    { type: "value", name: "rescaled phi_hat", scale: true },
    { type: "value", name: "phi_hat", scale: true },
  ];
  option.series = [
    {
      name: "rescaled",
      type: "line",
      symbolSize: 7,
      data: rows.map((r) => [num(r, "p"), num(r, "rescaled")]),
    },
    {
      name: "phi_hat",
      type: "line",
      yAxisIndex: 1,
      lineStyle: { type: "dashed" },
      symbolSize: 5,
      data: rows.map((r) => [num(r, "p"), num(r, "phi")]),
    },
  ] as EChartsOption["series"];
  return option;
}
