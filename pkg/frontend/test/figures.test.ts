import { mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { describe, expect, it } from "vitest";

import { loadCsv } from "../src/csv.js";
import { buildMgapsFigure, buildMseRhoFigure } from "../src/figures.js";
import { buildOption, renderFigure, renderToSvg } from "../src/render.js";
import { FIGURE_IDS, SchemaError, parseQIllustration } from "../src/schemas.js";

const FIXTURES = join(__dirname, "fixtures");

function tempDir(): string {
  return mkdtempSync(join(tmpdir(), "figures-"));
}

describe("csv loading and schemas", () => {
  it("loads a band csv with headers", () => {
    const table = loadCsv(join(FIXTURES, "mgaps_scenario1_band.csv"));
    expect(table.columns).toEqual(["t", "mean", "p25", "p75", "reference"]);
    expect(table.rows.length).toBeGreaterThan(5);
  });

  it("names the missing column", () => {
    const dir = tempDir();
    const bad = join(dir, "mgaps_scenario1_band.csv");
    writeFileSync(bad, "t,mean,p25\n1,0.5,0.4\n");
    expect(() => buildOption("fig1-mgaps-current", dir)).toThrowError(
      /missing required column 'p75'/,
    );
  });

  it("missing file is a schema error", () => {
    expect(() => buildOption("fig3-mse-rho", tempDir())).toThrowError(SchemaError);
  });

  it("rejects malformed q-illustration documents", () => {
    expect(() => parseQIllustration({ branches: [] }, "doc")).toThrowError(
      /invalid document/,
    );
  });
});

describe("figure options", () => {
  it("mgaps figures carry the reference line", () => {
    for (const id of ["fig1-mgaps-current", "fig2-mgaps-next"] as const) {
      const option = buildOption(id, FIXTURES);
      const series = option.series as any[];
      const withMark = series.find((s) => s.markLine !== undefined);
      expect(withMark).toBeDefined();
      const table = loadCsv(join(FIXTURES, `mgaps_scenario${id === "fig1-mgaps-current" ? 1 : 2}_band.csv`));
      const reference = Number(table.rows[0]["reference"]);
      expect(withMark.markLine.data[0].yAxis).toBeCloseTo(reference, 12);
    }
  });

  it("mse-rho has one series per predictor and entry", () => {
    const option = buildMseRhoFigure(loadCsv(join(FIXTURES, "mse_rho.csv")), "fixture");
    const series = option.series as any[];
    expect(series.length).toBe(4); // 2 predictors x 2 entries
    for (const s of series) {
      const xs = s.data.map((p: [number, number]) => p[0]);
      expect([...xs].sort((a, b) => a - b)).toEqual(xs); // sorted by rho
    }
  });

  it("cost-rho overlays the closed-form expectation", () => {
    const option = buildOption("fig4-cost-rho", FIXTURES);
    const names = (option.series as any[]).map((s) => s.name as string);
    expect(names.some((n) => n.includes("closed-form"))).toBe(true);
    expect(names).toContain("no-prediction");
  });

  it("q-illustration parabolas have vertices at the revealed optima", () => {
    const option = buildOption("fig5-q-illustration", FIXTURES);
    const series = option.series as any[];
    const informed = series.filter((s) => String(s.name).startsWith("informed"));
    expect(informed.length).toBe(2);
    for (const s of informed) {
      const best = s.data.reduce((acc: [number, number], p: [number, number]) =>
        p[1] < acc[1] ? p : acc);
      expect(Math.abs(best[1])).toBeLessThan(1e-9); // minimum value 0
    }
    const uninformed = series.find((s) => s.name === "uninformed");
    const atZero = uninformed.data.find((p: [number, number]) => Math.abs(p[0]) < 1e-9);
    expect(atZero[1]).toBeCloseTo(1.0, 9); // offset by the unavoidable loss
  });

  it("mse-time groups by variant and offset", () => {
    const option = buildOption("fig6-mse-time", FIXTURES);
    const names = (option.series as any[]).map((s) => s.name as string);
    expect(names).toContain("variant 1, target t+0");
    expect(names).toContain("variant 2, target t+1");
  });
});

describe("rendering", () => {
  it("produces svg output for every figure", () => {
    const out = tempDir();
    for (const id of FIGURE_IDS) {
      const path = renderFigure({ figureId: id, inputDir: FIXTURES, outputPath: join(out, `${id}.svg`) });
      const svg = readFileSync(path, "utf-8");
      expect(svg.startsWith("<svg")).toBe(true);
      expect(svg.length).toBeGreaterThan(2000);
    }
  });

  it("mgaps svg shows the reference-line label", () => {
    const option = buildOption("fig1-mgaps-current", FIXTURES);
    const svg = renderToSvg(option);
    expect(svg).toContain("P/T");
  });

  it("re-rendering is byte-identical", () => {
    const option = buildOption("fig4-cost-rho", FIXTURES);
    expect(renderToSvg(option)).toEqual(renderToSvg(option));
  });

  it("band stays between the mean extremes", () => {
    const table = loadCsv(join(FIXTURES, "mgaps_scenario1_band.csv"));
    const option = buildMgapsFigure(table, "fixture", "t");
    const series = option.series as any[];
    const lower = series[0].data as [number, number][];
    const width = series[1].data as [number, number][];
    lower.forEach(([, lo], i) => {
      expect(width[i][1]).toBeGreaterThanOrEqual(0);
      expect(lo).toBeLessThanOrEqual(lo + width[i][1]);
    });
  });

  it("single-replicate band collapses to the mean line", () => {
    const dir = tempDir();
    writeFileSync(join(dir, "mgaps_scenario1_band.csv"),
      "t,mean,p25,p75,reference\n0,0.1,0.1,0.1,0.5\n10,0.2,0.2,0.2,0.5\n");
    const option = buildOption("fig1-mgaps-current", dir);
    const width = (option.series as any[])[1].data as [number, number][];
    for (const [, w] of width) expect(w).toBe(0);
    expect(renderToSvg(option).startsWith("<svg")).toBe(true);
  });
});
