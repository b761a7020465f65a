/**
 * Parsers for the harness CSV outputs.
 *
 * `results.csv` is long-format with the fixed header
 * `sweep,solver,metric,value,std,seed`; error-map files carry `r,phi,error`
 * with azimuth in degrees. Parse errors report the 1-based row number.
 */

export interface ResultRecord {
  sweep: number;
  solver: string;
  metric: string;
  value: number;
  std: number | null;
  seed: number;
}

export interface MapPoint {
  r: number;
  phi: number;
  error: number;
}

export const RESULTS_HEADER = "sweep,solver,metric,value,std,seed";
export const MAP_HEADER = "r,phi,error";

export class CsvError extends Error {
  constructor(message: string, public readonly row: number, public readonly file?: string) {
    super(`${file ?? "csv"}:${row}: ${message}`);
  }
}

function parseNumber(raw: string, field: string, row: number, file?: string): number {
  const value = Number(raw);
  if (raw.trim() === "" || Number.isNaN(value) && raw.trim() !== "nan") {
    throw new CsvError(`field ${field} is not a number: ${JSON.stringify(raw)}`, row, file);
  }
  return raw.trim() === "nan" ? Number.NaN : value;
}

function splitLines(text: string): string[] {
  return text.split(/\r?\n/).filter((line, i, all) => !(line === "" && i === all.length - 1));
}

export function parseResultsCsv(text: string, file?: string): ResultRecord[] {
  const lines = splitLines(text);
  if (lines.length === 0 || lines[0].trim() !== RESULTS_HEADER) {
    throw new CsvError(`expected header ${JSON.stringify(RESULTS_HEADER)}`, 1, file);
  }
  const records: ResultRecord[] = [];
  for (let i = 1; i < lines.length; i++) {
    if (lines[i].trim() === "") continue;
    const parts = lines[i].split(",");
    if (parts.length !== 6) {
      throw new CsvError(`expected 6 fields, got ${parts.length}`, i + 1, file);
    }
    records.push({
      sweep: parseNumber(parts[0], "sweep", i + 1, file),
      solver: parts[1],
      metric: parts[2],
      value: parseNumber(parts[3], "value", i + 1, file),
      std: parts[4].trim() === "" ? null : parseNumber(parts[4], "std", i + 1, file),
      seed: parseNumber(parts[5], "seed", i + 1, file),
    });
  }
  return records;
}

export function parseMapCsv(text: string, file?: string): MapPoint[] {
  const lines = splitLines(text);
  if (lines.length === 0 || lines[0].trim() !== MAP_HEADER) {
    throw new CsvError(`expected header ${JSON.stringify(MAP_HEADER)}`, 1, file);
  }
  const points: MapPoint[] = [];
  for (let i = 1; i < lines.length; i++) {
    if (lines[i].trim() === "") continue;
    const parts = lines[i].split(",");
    if (parts.length !== 3) {
      throw new CsvError(`expected 3 fields, got ${parts.length}`, i + 1, file);
    }
    points.push({
      r: parseNumber(parts[0], "r", i + 1, file),
      phi: parseNumber(parts[1], "phi", i + 1, file),
      error: parseNumber(parts[2], "error", i + 1, file),
    });
  }
  return points;
}
