import * as fs from "fs";
import * as os from "os";
import * as path from "path";
import { afterAll, describe, expect, it } from "vitest";

import {
  Table,
  densityFamily,
  num,
  parseTable,
  requireColumns,
  requireRows,
  requireSameHash,
} from "../src/table.js";

const dir = fs.mkdtempSync(path.join(os.tmpdir(), "figtab-"));
afterAll(() => fs.rmSync(dir, { recursive: true, force: true }));

function writeCsv(name: string, text: string): string {
  const p = path.join(dir, name);
  fs.writeFileSync(p, text);
  return p;
}

function fakeTable(meta: Record<string, string>): Table {
  return { path: "mem", meta, columns: ["x"], rows: [{ x: "1" }] };
}

describe("parseTable", () => {
  it("splits preamble from body", () => {
    const p = writeCsv(
      "a.csv",
      "# config_hash=abc\n# spec={\"p\"=0.5}\nn,sd\n16,1.5\n32,\n"
    );
    const t = parseTable(p);
    expect(t.meta["config_hash"]).toBe("abc");
    expect(t.meta["spec"]).toBe('{"p"=0.5}');
    expect(t.columns).toEqual(["n", "sd"]);
    expect(t.rows).toHaveLength(2);
    expect(t.rows[1]["sd"]).toBe("");
  });

  it("rejects a preamble line without =", () => {
    const p = writeCsv("b.csv", "# watno\nn\n1\n");
    expect(() => parseTable(p)).toThrow(/malformed preamble/);
  });
});

describe("guards", () => {
  it("names every missing column", () => {
    const t = parseTable(writeCsv("c.csv", "n,sd\n16,1\n"));
    expect(() => requireColumns(t, ["n", "mean", "tail_freq"])).toThrow(
      /missing columns: mean, tail_freq/
    );
  });

  it("raises a no-rows error on an empty body", () => {
    const t = parseTable(writeCsv("d.csv", "# config_hash=x\nn,sd\n"));
    expect(() => requireRows(t)).toThrow(/no rows/);
  });

  it("refuses differing config hashes", () => {
    const a = fakeTable({ config_hash: "aaa" });
    const b = fakeTable({ config_hash: "bbb" });
    expect(() => requireSameHash([a, b])).toThrow(/differing config hashes/);
    expect(() => requireSameHash([a, a])).not.toThrow();
  });
});

describe("num", () => {
  const row = { a: "1.5", b: "", c: "-inf", d: "oops" };
  it("parses floats and blanks", () => {
    expect(num(row, "a")).toBe(1.5);
    expect(Number.isNaN(num(row, "b"))).toBe(true);
    expect(num(row, "c")).toBe(-Infinity);
  });
  it("rejects garbage cells", () => {
    expect(() => num(row, "d")).toThrow(/column d/);
  });
});

describe("densityFamily", () => {
  const strip = (p: number, alpha = 2.0): Table =>
    fakeTable({ config: JSON.stringify({ alpha, p, seed: 7 }) });

  it("returns densities when configs differ only in p", () => {
    expect(densityFamily([strip(0.3), strip(0.7)])).toEqual([0.3, 0.7]);
  });

  it("refuses configs that differ beyond p", () => {
    expect(() => densityFamily([strip(0.3), strip(0.7, 1.0)])).toThrow(
      /differ beyond p/
    );
  });

  it("refuses duplicate densities", () => {
    expect(() => densityFamily([strip(0.3), strip(0.3)])).toThrow(/distinct p/);
  });
});
