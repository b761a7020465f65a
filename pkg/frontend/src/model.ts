/**
 * Pure chart-model builders: harness records in, plottable structures out.
 * No statistics are recomputed here; the harness CSV is the single source
 * of truth.
 */

import { MapPoint, ResultRecord } from "./csv";

export interface Series {
  label: string;
  x: number[];
  y: number[];
  dashed: boolean;
}

export interface LineChart {
  title: string;
  xLabel: string;
  yLabel: string;
  logY: boolean;
  series: Series[];
}

export interface HeatPanel {
  title: string;
  rValues: number[];
  phiValues: number[];
  /** cells[ri][pi], NaN where the harness skipped the cell */
  cells: number[][];
}

export interface Marker {
  r: number;
  phiDeg: number;
}

export interface Fig4Model {
  title: string;
  panels: HeatPanel[];
  markers: Marker[];
}

function seriesFor(records: ResultRecord[], solver: string, metric: string): [number[], number[]] {
  const rows = records
    .filter((r) => r.solver === solver && r.metric === metric)
    .sort((a, b) => a.sweep - b.sweep);
  return [rows.map((r) => r.sweep), rows.map((r) => r.value)];
}

function solversWith(records: ResultRecord[], metric: string): string[] {
  return [...new Set(records.filter((r) => r.metric === metric).map((r) => r.solver))].sort();
}

/** RMSE lines per solver plus one dashed bound overlay per solver, log-y. */
export function fig2Chart(records: ResultRecord[]): LineChart {
  const series: Series[] = [];
  for (const solver of solversWith(records, "rmse")) {
    const [x, y] = seriesFor(records, solver, "rmse");
    series.push({ label: solver, x, y, dashed: false });
  }
  for (const solver of solversWith(records, "peb")) {
    const [x, y] = seriesFor(records, solver, "peb");
    series.push({ label: `${solver} bound`, x, y, dashed: true });
  }
  return {
    title: "Localization RMSE vs transmit power",
    xLabel: "transmit power [dBm]",
    yLabel: "RMSE / bound [m]",
    logY: true,
    series,
  };
}

/** Bound vs panel diagonal; one line per architecture:solver label, log-y. */
export function fig3Chart(records: ResultRecord[]): LineChart {
  const series: Series[] = [];
  for (const solver of solversWith(records, "peb")) {
    const [x, y] = seriesFor(records, solver, "peb");
    series.push({ label: solver, x, y, dashed: solver.startsWith("hbf") });
  }
  return {
    title: "Position error bound vs panel diagonal",
    xLabel: "panel diagonal [m]",
    yLabel: "bound [m]",
    logY: true,
    series,
  };
}

function panelFrom(name: string, points: MapPoint[]): HeatPanel {
  const rValues = [...new Set(points.map((p) => p.r))].sort((a, b) => a - b);
  const phiValues = [...new Set(points.map((p) => p.phi))].sort((a, b) => a - b);
  const rIndex = new Map(rValues.map((v, i) => [v, i]));
  const pIndex = new Map(phiValues.map((v, i) => [v, i]));
  const cells = rValues.map(() => phiValues.map(() => Number.NaN));
  for (const p of points) {
    cells[rIndex.get(p.r)!][pIndex.get(p.phi)!] = p.error;
  }
  return { title: name, rValues, phiValues, cells };
}

/** Map panels (one per input CSV) plus true-position markers from the sidecar. */
export function fig4Model(
  maps: { name: string; points: MapPoint[] }[],
  sidecar?: unknown,
): Fig4Model {
  const markers: Marker[] = [];
  const doc = sidecar as { config?: { ues?: { r: number; phi_deg: number }[] } } | undefined;
  for (const ue of doc?.config?.ues ?? []) {
    markers.push({ r: ue.r, phiDeg: ue.phi_deg });
  }
  return {
    title: "Area estimation error maps",
    panels: maps.map((m) => panelFrom(m.name, m.points)),
    markers,
  };
}
