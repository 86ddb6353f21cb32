// FigureSpec loading and dispatch: which tables each figure kind consumes,
// which consistency checks apply, and where the SVG goes.

import * as fs from "fs";
import * as path from "path";

import {
  fluctuationOption,
  freeEnergyHeatmapOption,
  hdTrendOption,
  maxJumpOption,
  timeConstantOption,
} from "./figures.js";
import { renderSvg } from "./render.js";
import { Table, parseTable, requireSameHash } from "./table.js";

export const KINDS = [
  "fluctuation",
  "time_constant",
  "free_energy_heatmap",
  "max_jump",
  "hd_trend",
] as const;
export type FigureKind = (typeof KINDS)[number];

export interface FigureSpec {
  kind: FigureKind;
  inputs: string[];
  out: string;
  title?: string;
  width?: number;
  height?: number;
  logX?: boolean;
  logY?: boolean;
}

export function loadSpec(specPath: string): FigureSpec {
  let payload: unknown;
  try {
    payload = JSON.parse(fs.readFileSync(specPath, "utf8"));
  } catch (err) {
    throw new Error(`${specPath}: ${(err as Error).message}`);
  }
  if (typeof payload !== "object" || payload === null || Array.isArray(payload)) {
    throw new Error(`${specPath}: spec must be a JSON object`);
  }
  const spec = payload as Record<string, unknown>;
  if (!KINDS.includes(spec.kind as FigureKind)) {
    throw new Error(`${specPath}: kind must be one of ${KINDS.join(", ")}, got ${spec.kind}`);
  }
  if (!Array.isArray(spec.inputs) || spec.inputs.length === 0 || !spec.inputs.every((x) => typeof x === "string")) {
    throw new Error(`${specPath}: inputs must be a non-empty list of CSV paths`);
  }
  if (typeof spec.out !== "string" || spec.out.length === 0) {
    throw new Error(`${specPath}: out must be the output SVG path`);
  }
  for (const key of ["width", "height"]) {
    if (spec[key] !== undefined && (typeof spec[key] !== "number" || (spec[key] as number) <= 0)) {
      throw new Error(`${specPath}: ${key} must be a positive number`);
    }
  }
  return spec as unknown as FigureSpec;
}

export function buildOption(spec: FigureSpec, tables: Table[]) {
  const axis = { title: spec.title, logX: spec.logX, logY: spec.logY };
  switch (spec.kind) {
    case "fluctuation":
      if (tables.length > 2) throw new Error("fluctuation takes the fluctuation CSV plus at most a slope CSV");
      requireSameHash(tables);
      return fluctuationOption(tables[0], tables[1], axis);
    case "time_constant":
      if (tables.length !== 1) throw new Error("time_constant takes exactly one p-continuity CSV");
      return timeConstantOption(tables[0], axis);
    case "free_energy_heatmap":
      return freeEnergyHeatmapOption(tables, axis);
    case "max_jump":
      if (tables.length !== 1) throw new Error("max_jump takes exactly one max-jump CSV");
      return maxJumpOption(tables[0], axis);
    case "hd_trend":
      if (tables.length !== 1) throw new Error("hd_trend takes exactly one hd-trend CSV");
      return hdTrendOption(tables[0], axis);
  }
}

export function renderFigure(spec: FigureSpec): string {
  const tables = spec.inputs.map(parseTable);
  const option = buildOption(spec, tables);
  const svg = renderSvg(option, spec.width ?? 900, spec.height ?? 600);
  fs.mkdirSync(path.dirname(path.resolve(spec.out)), { recursive: true });
  fs.writeFileSync(spec.out, svg);
  return spec.out;
}
