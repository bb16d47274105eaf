#!/usr/bin/env node
/**
 * render-figures --in DIR --figures LIST --out DIR
 *
 * Reads the experiment CLI's artifacts from the input directory and writes
 * one SVG per requested figure.  Exits 2 on schema/input problems.
 */

import { join } from "node:path";

import yargs from "yargs";
import { hideBin } from "yargs/helpers";

import { renderFigure } from "./render.js";
import { FIGURE_IDS, FigureId, SchemaError } from "./schemas.js";

export async function main(argv: string[]): Promise<number> {
  const args = await yargs(hideBin(argv))
    .option("in", { type: "string", demandOption: true, describe: "input directory" })
    .option("out", { type: "string", demandOption: true, describe: "output directory" })
    .option("figures", {
      type: "string",
      default: "all",
      describe: `comma-separated figure ids (${FIGURE_IDS.join(", ")}) or 'all'`,
    })
    .strict()
    .parse();

  const wanted =
    args.figures === "all" ? [...FIGURE_IDS] : args.figures.split(",").map((s) => s.trim());
  for (const figure of wanted) {
    if (!(FIGURE_IDS as readonly string[]).includes(figure)) {
      process.stderr.write(`unknown figure id '${figure}'\n`);
      return 2;
    }
  }
  try {
    for (const figure of wanted as FigureId[]) {
      const outputPath = join(args.out, `${figure}.svg`);
      renderFigure({ figureId: figure, inputDir: args.in, outputPath });
      process.stdout.write(`wrote ${outputPath}\n`);
    }
  } catch (err) {
    if (err instanceof SchemaError) {
      process.stderr.write(`schema error: ${err.message}\n`);
      return 2;
    }
    throw err;
  }
  return 0;
}

const invokedDirectly =
  process.argv[1] !== undefined && import.meta.url.endsWith(process.argv[1].split("/").pop()!);
if (invokedDirectly) {
  main(process.argv).then((code) => process.exit(code));
}
