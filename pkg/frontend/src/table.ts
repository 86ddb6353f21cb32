// CSV artifact reader: "# key=value" preamble followed by a plain CSV body.

import * as fs from "fs";
import Papa from "papaparse";

export interface Table {
  path: string;
  meta: Record<string, string>;
  columns: string[];
  rows: Record<string, string>[];
}

export function parseTable(path: string): Table {
  const text = fs.readFileSync(path, "utf8");
  const meta: Record<string, string> = {};
  const bodyLines: string[] = [];
  for (const line of text.split("\n")) {
    if (line.startsWith("# ")) {
      const entry = line.slice(2);
      const eq = entry.indexOf("=");
      if (eq < 0) throw new Error(`${path}: malformed preamble line: ${line}`);
      meta[entry.slice(0, eq)] = entry.slice(eq + 1);
    } else {
      bodyLines.push(line);
    }
  }
  const parsed = Papa.parse<Record<string, string>>(bodyLines.join("\n"), {
    header: true,
    skipEmptyLines: true,
  });
  if (parsed.errors.length > 0) {
    const first = parsed.errors[0];
    throw new Error(`${path}: CSV parse error: ${first.message} (row ${first.row})`);
  }
  const columns = parsed.meta.fields ?? [];
  if (columns.length === 0) throw new Error(`${path}: no header row`);
  return { path, meta, columns, rows: parsed.data };
}

export function requireColumns(table: Table, names: string[]): void {
  const missing = names.filter((n) => !table.columns.includes(n));
  if (missing.length > 0) {
    throw new Error(`${table.path}: missing columns: ${missing.join(", ")}`);
  }
}

export function requireRows(table: Table): void {
  if (table.rows.length === 0) throw new Error(`${table.path}: no rows`);
}

export function num(row: Record<string, string>, col: string): number {
  const cell = row[col];
  if (cell === undefined || cell === "") return NaN;
  if (cell === "inf") return Infinity;
  if (cell === "-inf") return -Infinity;
  const v = Number(cell);
  if (Number.isNaN(v) && cell !== "nan") {
    throw new Error(`column ${col}: not a number: ${cell}`);
  }
  return v;
}

export function configHash(table: Table): string {
  const hash = table.meta["config_hash"];
  if (!hash) throw new Error(`${table.path}: preamble has no config_hash entry`);
  return hash;
}

export function requireSameHash(tables: Table[]): void {
  const hashes = new Set(tables.map(configHash));
  if (hashes.size > 1) {
    throw new Error(
      `refusing to mix inputs with differing config hashes: ${[...hashes].sort().join(", ")}`
    );
  }
}

// The free-energy heatmap stacks per-density strips, so its inputs agree on
// everything except the density entry of the embedded config.  Returns the
// density of each table, in input order.
export function densityFamily(tables: Table[]): number[] {
  const ps: number[] = [];
  const stripped = new Set<string>();
  for (const t of tables) {
    const raw = t.meta["config"];
    if (!raw) throw new Error(`${t.path}: preamble has no config entry`);
    let config: Record<string, unknown>;
    try {
      config = JSON.parse(raw);
    } catch {
      throw new Error(`${t.path}: embedded config is not valid JSON`);
    }
    const p = config["p"];
    if (typeof p !== "number") throw new Error(`${t.path}: embedded config has no numeric p`);
    ps.push(p);
    delete config["p"];
    stripped.add(JSON.stringify(config, Object.keys(config).sort()));
  }
  if (stripped.size > 1) {
    throw new Error("refusing to mix heatmap strips whose configs differ beyond p");
  }
  if (new Set(ps).size !== ps.length) {
    throw new Error("heatmap strips must have distinct p values");
  }
  return ps;
}
