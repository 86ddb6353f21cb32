#!/usr/bin/env node
// polymerlab-figures --spec figure.json [--out override.svg]

import yargs from "yargs";
import { hideBin } from "yargs/helpers";

import { loadSpec, renderFigure } from "./spec.js";

export async function main(argv: string[]): Promise<number> {
  const args = await yargs(argv)
    .option("spec", { type: "string", demandOption: true, describe: "FigureSpec JSON file" })
    .option("out", { type: "string", describe: "override the spec's output path" })
    .strict()
    .parse();
  try {
    const spec = loadSpec(args.spec);
    if (args.out) spec.out = args.out;
    const out = renderFigure(spec);
    console.log(out);
    return 0;
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 1;
  }
}

const invoked = process.argv[1] ?? "";
if (invoked.endsWith("cli.js") || invoked.endsWith("polymerlab-figures")) {
  main(hideBin(process.argv)).then((code) => {
    process.exitCode = code;
  });
}
