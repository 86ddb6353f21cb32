import { describe, expect, it } from "vitest";

import {
  fluctuationOption,
  freeEnergyHeatmapOption,
  hdTrendOption,
  maxJumpOption,
  timeConstantOption,
} from "../src/figures.js";
import { Table } from "../src/table.js";

function table(columns: string[], rows: string[][], meta: Record<string, string> = {}): Table {
  return {
    path: "mem",
    meta,
    columns,
    rows: rows.map((r) => Object.fromEntries(columns.map((c, i) => [c, r[i]]))),
  };
}

const FLUCT = ["target", "n", "count", "excluded", "mean", "sd", "tail_freq"];
const SLOPE = ["target", "slope", "slope_stderr", "ci_low", "ci_high", "points"];
const CONT = ["kind", "grid_value", "count", "estimate", "stderr", "jump_ok"];

describe("fluctuation", () => {
  const fluct = table(FLUCT, [
    ["FPP", "64", "50", "0", "10.0", "3.0", "0.1"],
    ["FPP", "128", "50", "0", "20.0", "4.2", "0.0"],
  ]);

  it("copies the slope annotation character for character", () => {
    const slope = table(SLOPE, [["FPP", "0.500", "0.01", "0.48", "0.52", "4"]]);
    const option = fluctuationOption(fluct, slope, {});
    const graphic = (option.graphic as { style: { text: string } }[])[0];
    expect(graphic.style.text).toBe("FPP slope = 0.500");
  });

  it("renders log axes by default and skips the annotation without a slope table", () => {
    const option = fluctuationOption(fluct, undefined, {});
    expect((option.xAxis as { type: string }).type).toBe("log");
    expect((option.yAxis as { type: string }).type).toBe("log");
    expect(option.graphic).toBeUndefined();
    const series = option.series as { data: number[][] }[];
    expect(series[0].data).toEqual([
      [64, 3.0],
      [128, 4.2],
    ]);
  });

  it("names missing columns", () => {
    const bad = table(["target", "n"], [["FPP", "64"]]);
    expect(() => fluctuationOption(bad, undefined, {})).toThrow(/missing columns: count/);
  });

  it("refuses an empty table instead of drawing a blank", () => {
    const empty = table(FLUCT, []);
    expect(() => fluctuationOption(empty, undefined, {})).toThrow(/no rows/);
  });
});

describe("time_constant", () => {
  it("draws the estimate with a one-stderr band", () => {
    const curve = table(CONT, [
      ["p", "0.4", "30", "0.30", "0.01", ""],
      ["p", "0.5", "30", "0.26", "0.01", "true"],
    ]);
    const option = timeConstantOption(curve, {});
    const series = option.series as { name: string; data: number[][] }[];
    expect(series.map((s) => s.name)).toEqual(["band lower", "+-1 se", "mu_hat"]);
    expect(series[2].data).toEqual([
      [0.4, 0.3],
      [0.5, 0.26],
    ]);
    expect(series[0].data[0][1]).toBeCloseTo(0.29, 12);
    expect(series[1].data[0][1]).toBeCloseTo(0.02, 12);
  });

  it("renders a flat zero curve for empty-environment rows", () => {
    const curve = table(CONT, [
      ["p", "0.0", "30", "0.0", "0.0", ""],
      ["p", "0.1", "30", "0.31", "0.01", "true"],
    ]);
    const option = timeConstantOption(curve, {});
    const series = option.series as { data: number[][] }[];
    expect(series[2].data[0]).toEqual([0, 0]);
  });

  it("rejects a beta strip", () => {
    const curve = table(CONT, [["beta", "-1.0", "30", "-0.4", "0.01", ""]]);
    expect(() => timeConstantOption(curve, {})).toThrow(/expected a p-continuity/);
  });
});

describe("free_energy_heatmap", () => {
  const BETAS = ["-1.0", "-0.5", "0.0"];
  const strip = (p: string, estimates: string[], alpha = "2.0") =>
    table(
      CONT,
      estimates.map((e, i) => ["beta", BETAS[i], "30", e, "0.01", ""]),
      { config: `{"alpha":${alpha},"p":${p},"seed":7}` }
    );

  it("stacks strips into a (beta, p) grid sorted by p", () => {
    const option = freeEnergyHeatmapOption(
      [strip("0.7", ["-0.9", "-0.5", "-0.1"]), strip("0.3", ["-0.4", "-0.2", "-0.05"])],
      {}
    );
    expect((option.yAxis as { data: string[] }).data).toEqual(["0.3", "0.7"]);
    expect((option.xAxis as { data: string[] }).data).toEqual(["-1.0", "-0.5", "0.0"]);
    const series = (option.series as { data: [number, number, number][] }[])[0];
    expect(series.data).toContainEqual([0, 0, -0.4]);
    expect(series.data).toContainEqual([0, 1, -0.9]);
    const vm = option.visualMap as { min: number; max: number };
    expect(vm.min).toBe(-0.9);
    expect(vm.max).toBe(-0.05);
  });

  it("needs at least two strips", () => {
    expect(() => freeEnergyHeatmapOption([strip("0.3", ["-0.4"])], {})).toThrow(
      /at least two/
    );
  });

  it("refuses strips with different beta grids", () => {
    const odd = table(
      CONT,
      [["beta", "-2.0", "30", "-0.4", "0.01", ""]],
      { config: '{"alpha":2.0,"p":0.7,"seed":7}' }
    );
    expect(() =>
      freeEnergyHeatmapOption([strip("0.3", ["-0.4"]), odd], {})
    ).toThrow(/share the beta grid/);
  });

  it("refuses strips from unrelated runs", () => {
    expect(() =>
      freeEnergyHeatmapOption(
        [strip("0.3", ["-0.4"]), strip("0.7", ["-0.9"], "1.0")],
        {}
      )
    ).toThrow(/differ beyond p/);
  });
});

describe("max_jump and hd_trend", () => {
  it("puts the band fraction on the first axis and quartiles on the second", () => {
    const t = table(
      ["n", "count", "q50", "q90", "q100", "fraction_within_band"],
      [
        ["64", "50", "2", "3", "5", "1.0"],
        ["128", "50", "2", "3", "6", "0.98"],
      ]
    );
    const option = maxJumpOption(t, {});
    const series = option.series as { name: string; yAxisIndex?: number }[];
    expect(series.map((s) => s.name)).toEqual(["within band", "q50", "q90", "q100"]);
    expect(series[0].yAxisIndex).toBeUndefined();
    expect(series[3].yAxisIndex).toBe(1);
  });

  it("plots rescaled and raw free energy against density", () => {
    const t = table(
      ["p", "count", "infeasible", "phi", "stderr", "rescaled", "log_slope"],
      [
        ["0.3", "40", "0", "-0.36", "0.01", "-0.25", ""],
        ["0.6", "40", "0", "-0.95", "0.01", "-0.38", "-0.39"],
      ]
    );
    const option = hdTrendOption(t, {});
    const series = option.series as { name: string; data: number[][] }[];
    expect(series[0].name).toBe("rescaled");
    expect(series[0].data[1]).toEqual([0.6, -0.38]);
    expect(series[1].data[1]).toEqual([0.6, -0.95]);
  });
});
