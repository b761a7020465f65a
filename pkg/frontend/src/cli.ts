#!/usr/bin/env node
/**
 * plot --kind fig2|fig3|fig4 --in <csv> [--in <csv>] [--config <json>] --out <png>
 *
 * fig2/fig3 take one results.csv; fig4 takes one long-format map CSV per
 * panel plus the harness config.json sidecar for the true-position markers.
 * The optional config may also carry a "style" object overriding defaults.
 */

import * as fs from "node:fs";
import { parseArgs } from "node:util";

import { CsvError, parseMapCsv, parseResultsCsv } from "./csv";
import { fig2Chart, fig3Chart, fig4Model } from "./model";
import { renderFig4, renderLineChart } from "./render";
import { mergeStyle, Style } from "./style";

const KINDS = ["fig2", "fig3", "fig4"] as const;

export interface PlotOptions {
  kind: string;
  inputs: string[];
  config?: string;
  out: string;
}

export function parseCliArgs(argv: string[]): PlotOptions {
  const { values } = parseArgs({
    args: argv,
    options: {
      kind: { type: "string" },
      in: { type: "string", multiple: true },
      config: { type: "string" },
      out: { type: "string" },
    },
  });
  const kind = values.kind ?? "";
  if (!KINDS.includes(kind as (typeof KINDS)[number])) {
    throw new Error(`--kind must be one of ${KINDS.join("|")}, got ${JSON.stringify(kind)}`);
  }
  const inputs = values.in ?? [];
  if (inputs.length === 0) {
    throw new Error("at least one --in CSV is required");
  }
  if (!values.out) {
    throw new Error("--out <png> is required");
  }
  return { kind, inputs, config: values.config, out: values.out };
}

function mapName(path: string): string {
  const base = path.replace(/\\/g, "/").split("/").pop() ?? path;
  return base.replace(/^fig4_map_/, "").replace(/\.csv$/, "");
}

export function renderToPng(opts: PlotOptions): Buffer {
  let sidecar: unknown;
  if (opts.config) {
    sidecar = JSON.parse(fs.readFileSync(opts.config, "utf-8"));
  }
  const style: Style = mergeStyle((sidecar as { style?: Partial<Style> } | undefined)?.style);

  if (opts.kind === "fig4") {
    const maps = opts.inputs.map((path) => ({
      name: mapName(path),
      points: parseMapCsv(fs.readFileSync(path, "utf-8"), path),
    }));
    return renderFig4(fig4Model(maps, sidecar), style).toBuffer("image/png");
  }
  const records = parseResultsCsv(fs.readFileSync(opts.inputs[0], "utf-8"), opts.inputs[0]);
  const chart = opts.kind === "fig2" ? fig2Chart(records) : fig3Chart(records);
  return renderLineChart(chart, style).toBuffer("image/png");
}

export function main(argv: string[]): number {
  let opts: PlotOptions;
  try {
    opts = parseCliArgs(argv);
  } catch (err) {
    console.error(String(err instanceof Error ? err.message : err));
    return 2;
  }
  try {
    const png = renderToPng(opts);
    fs.writeFileSync(opts.out, png);
    console.log(`wrote ${opts.out}`);
    return 0;
  } catch (err) {
    if (err instanceof CsvError) {
      console.error(err.message);
    } else {
      console.error(String(err instanceof Error ? err.message : err));
    }
    return 1;
  }
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}
