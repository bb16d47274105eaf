/**
 * Input validation for the experiment CLI's CSV/JSON artifacts.
 *
 * Every figure declares the columns it needs; a missing column raises a
 * SchemaError naming it, so a stale or truncated artifact fails loudly
 * instead of producing an empty plot.
 */

import { z } from "zod";

export class SchemaError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "SchemaError";
  }
}

export type CsvTable = {
  columns: string[];
  rows: Record<string, number | string>[];
};

export function requireColumns(table: CsvTable, needed: string[], source: string): void {
  for (const col of needed) {
    if (!table.columns.includes(col)) {
      throw new SchemaError(`${source}: missing required column '${col}'`);
    }
  }
}

export function numericColumn(table: CsvTable, name: string): number[] {
  return table.rows.map((row) => {
    const value = Number(row[name]);
    if (!Number.isFinite(value)) {
      throw new SchemaError(`column '${name}' holds a non-numeric value: ${row[name]}`);
    }
    return value;
  });
}

/** Parabola parameters for the expected cost-to-go illustration. */
export const qIllustrationSchema = z.object({
  stage_cost: z.string(),
  branches: z.array(
    z.object({ v: z.number(), vertex_u: z.number(), offset: z.number() }),
  ),
  baseline: z.object({ vertex_u: z.number(), offset: z.number() }),
});

export type QIllustration = z.infer<typeof qIllustrationSchema>;

export function parseQIllustration(doc: unknown, source: string): QIllustration {
  const result = qIllustrationSchema.safeParse(doc);
  if (!result.success) {
    const issue = result.error.issues[0];
    const path = issue.path.join(".") || "(root)";
    throw new SchemaError(`${source}: invalid document at '${path}': ${issue.message}`);
  }
  return result.data;
}

export const FIGURE_IDS = [
  "fig1-mgaps-current",
  "fig2-mgaps-next",
  "fig3-mse-rho",
  "fig4-cost-rho",
  "fig5-q-illustration",
  "fig6-mse-time",
] as const;

export type FigureId = (typeof FIGURE_IDS)[number];

/** Expected input file per figure, relative to the input directory. */
export const FIGURE_INPUTS: Record<FigureId, string> = {
  "fig1-mgaps-current": "mgaps_scenario1_band.csv",
  "fig2-mgaps-next": "mgaps_scenario2_band.csv",
  "fig3-mse-rho": "mse_rho.csv",
  "fig4-cost-rho": "cost_rho.csv",
  "fig5-q-illustration": "q_illustration.json",
  "fig6-mse-time": "mse_time.csv",
};
