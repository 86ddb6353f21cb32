import * as fs from "fs";
import * as os from "os";
import * as path from "path";
import { afterAll, describe, expect, it } from "vitest";

import { main } from "../src/cli.js";
import { FigureSpec, loadSpec, renderFigure } from "../src/spec.js";

const samples = path.resolve(__dirname, "..", "samples");
const dir = fs.mkdtempSync(path.join(os.tmpdir(), "figrender-"));
afterAll(() => fs.rmSync(dir, { recursive: true, force: true }));

function sample(name: string): string {
  return path.join(samples, name);
}

function render(spec: FigureSpec): string {
  renderFigure(spec);
  return fs.readFileSync(spec.out, "utf8");
}

describe("renderFigure on the shipped samples", () => {
  it("fluctuation: svg carries the slope.csv text verbatim", () => {
    const slopeCsv = fs.readFileSync(sample("slope.csv"), "utf8");
    const slopeCell = slopeCsv.trim().split("\n").at(-1)!.split(",")[1];
    const svg = render({
      kind: "fluctuation",
      inputs: [sample("fluctuation.csv"), sample("slope.csv")],
      out: path.join(dir, "fluctuation.svg"),
    });
    expect(svg).toContain("<svg");
    expect(svg).toContain(`FPP slope = ${slopeCell}`);
  });

  it("time_constant renders from continuity_p.csv", () => {
    const svg = render({
      kind: "time_constant",
      inputs: [sample("continuity_p.csv")],
      out: path.join(dir, "time_constant.svg"),
    });
    expect(svg).toContain("<svg");
    expect(svg).toContain("mu_hat");
  });

  it("free_energy_heatmap renders from three beta strips", () => {
    const svg = render({
      kind: "free_energy_heatmap",
      inputs: [
        sample("continuity_beta_p03.csv"),
        sample("continuity_beta_p05.csv"),
        sample("continuity_beta_p07.csv"),
      ],
      out: path.join(dir, "heatmap.svg"),
    });
    expect(svg).toContain("<svg");
    expect(svg).toContain("0.5"); // the middle density on the y axis
  });

  it("max_jump and hd_trend render", () => {
    for (const kind of ["max_jump", "hd_trend"] as const) {
      const svg = render({
        kind,
        inputs: [sample(`${kind}.csv`)],
        out: path.join(dir, `${kind}.svg`),
      });
      expect(svg).toContain("<svg");
    }
  });

  it("is deterministic byte for byte", () => {
    const spec: FigureSpec = {
      kind: "max_jump",
      inputs: [sample("max_jump.csv")],
      out: path.join(dir, "det.svg"),
    };
    renderFigure(spec);
    const first = fs.readFileSync(spec.out, "utf8");
    renderFigure(spec);
    expect(fs.readFileSync(spec.out, "utf8")).toBe(first);
  });
});

describe("refusals", () => {
  it("does not write an image for an empty table", () => {
    const empty = path.join(dir, "empty.csv");
    const header = fs
      .readFileSync(sample("fluctuation.csv"), "utf8")
      .split("\n")
      .filter((l) => l.startsWith("#") || l.startsWith("target"))
      .join("\n");
    fs.writeFileSync(empty, header + "\n");
    const out = path.join(dir, "never.svg");
    expect(() =>
      renderFigure({ kind: "fluctuation", inputs: [empty], out })
    ).toThrow(/no rows/);
    expect(fs.existsSync(out)).toBe(false);
  });

  it("refuses inputs with differing config hashes", () => {
    const foreign = path.join(dir, "foreign_slope.csv");
    const doctored = fs
      .readFileSync(sample("slope.csv"), "utf8")
      .replace(/# config_hash=\w+/, "# config_hash=0000");
    fs.writeFileSync(foreign, doctored);
    expect(() =>
      renderFigure({
        kind: "fluctuation",
        inputs: [sample("fluctuation.csv"), foreign],
        out: path.join(dir, "never2.svg"),
      })
    ).toThrow(/differing config hashes/);
  });
});

describe("spec loading and cli", () => {
  it("validates the spec shape", () => {
    const bad = path.join(dir, "bad.json");
    fs.writeFileSync(bad, JSON.stringify({ kind: "pie", inputs: ["x"], out: "y.svg" }));
    expect(() => loadSpec(bad)).toThrow(/kind must be one of/);
    fs.writeFileSync(bad, JSON.stringify({ kind: "max_jump", inputs: [], out: "y.svg" }));
    expect(() => loadSpec(bad)).toThrow(/non-empty list/);
  });

  it("renders through main and reports failures with exit 1", async () => {
    const specPath = path.join(dir, "ok.json");
    const out = path.join(dir, "cli.svg");
    fs.writeFileSync(
      specPath,
      JSON.stringify({ kind: "hd_trend", inputs: [sample("hd_trend.csv")], out })
    );
    expect(await main(["--spec", specPath])).toBe(0);
    expect(fs.existsSync(out)).toBe(true);

    const badPath = path.join(dir, "bad2.json");
    fs.writeFileSync(badPath, JSON.stringify({ kind: "hd_trend", inputs: ["/nope.csv"], out }));
    expect(await main(["--spec", badPath])).toBe(1);
  });
});
