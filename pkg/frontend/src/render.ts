import { mkdirSync, writeFileSync } from "node:fs";
import { dirname, join } from "node:path";

import * as echarts from "echarts";
import type { EChartsOption } from "echarts";

import { loadCsv, loadJson } from "./csv.js";
import {
  FIGURE_TITLES,
  buildCostRhoFigure,
  buildMgapsFigure,
  buildMseRhoFigure,
  buildMseTimeFigure,
  buildQIllustrationFigure,
} from "./figures.js";
import { FIGURE_INPUTS, FigureId, parseQIllustration } from "./schemas.js";

export interface FigureSpec {
  figureId: FigureId;
  inputDir: string;
  outputPath: string;
  width?: number;
  height?: number;
}

export function buildOption(figureId: FigureId, inputDir: string): EChartsOption {
  const input = join(inputDir, FIGURE_INPUTS[figureId]);
  switch (figureId) {
    case "fig1-mgaps-current":
    case "fig2-mgaps-next":
      return buildMgapsFigure(loadCsv(input), input, FIGURE_TITLES[figureId]);
    case "fig3-mse-rho":
      return buildMseRhoFigure(loadCsv(input), input);
    case "fig4-cost-rho":
      return buildCostRhoFigure(loadCsv(input), input);
    case "fig5-q-illustration":
      return buildQIllustrationFigure(parseQIllustration(loadJson(input), input));
    case "fig6-mse-time":
      return buildMseTimeFigure(loadCsv(input), input);
  }
}

export function renderToSvg(option: EChartsOption, width = 840, height = 520): string {
  const chart = echarts.init(null, null, {
    renderer: "svg",
    ssr: true,
    width,
    height,
  });
  try {
    chart.setOption(option);
    return normalizeSvgIds(chart.renderToSVGString());
  } finally {
    chart.dispose();
  }
}

/** The renderer bakes a process-global counter into class and clip-path
 * names; renumbering them by first appearance makes re-renders of the
 * same option byte-identical. */
export function normalizeSvgIds(svg: string): string {
  const seen = new Map<string, string>();
  return svg.replace(/zr\d+-(cls|c)-?\d+/g, (token, kind) => {
    let canon = seen.get(token);
    if (canon === undefined) {
      canon = `zr-${kind}-${seen.size}`;
      seen.set(token, canon);
    }
    return canon;
  });
}

export function renderFigure(spec: FigureSpec): string {
  const option = buildOption(spec.figureId, spec.inputDir);
  const svg = renderToSvg(option, spec.width, spec.height);
  mkdirSync(dirname(spec.outputPath), { recursive: true });
  writeFileSync(spec.outputPath, svg, "utf-8");
  return spec.outputPath;
}
