import { describe, expect, it } from "vitest";

import { CsvError, parseMapCsv, parseResultsCsv, RESULTS_HEADER } from "../src/csv";

const GOOD = [
  RESULTS_HEADER,
  "0,projection,rmse,0.01,0.002,7",
  "0,projection,peb,0.005,,7",
  "20,random,rmse,nan,,7",
].join("\n");

describe("parseResultsCsv", () => {
  it("parses records and empty std", () => {
    const recs = parseResultsCsv(GOOD);
    expect(recs).toHaveLength(3);
    expect(recs[0]).toEqual({
      sweep: 0, solver: "projection", metric: "rmse", value: 0.01, std: 0.002, seed: 7,
    });
    expect(recs[1].std).toBeNull();
    expect(Number.isNaN(recs[2].value)).toBe(true);
  });

  it("accepts a header-only file", () => {
    expect(parseResultsCsv(RESULTS_HEADER + "\n")).toEqual([]);
  });

  it("rejects a wrong header with row 1", () => {
    expect(() => parseResultsCsv("a,b,c\n")).toThrowError(/:1: expected header/);
  });

  it("reports the failing row number", () => {
    const bad = [RESULTS_HEADER, "0,projection,rmse,0.01,0.002,7", "junk-line"].join("\n");
    try {
      parseResultsCsv(bad, "results.csv");
      expect.unreachable();
    } catch (err) {
      expect(err).toBeInstanceOf(CsvError);
      expect((err as CsvError).row).toBe(3);
      expect(String((err as CsvError).message)).toContain("results.csv:3");
    }
  });

  it("rejects non-numeric values with the field name", () => {
    const bad = [RESULTS_HEADER, "x,projection,rmse,0.01,,7"].join("\n");
    expect(() => parseResultsCsv(bad)).toThrowError(/field sweep/);
  });
});

describe("parseMapCsv", () => {
  it("parses long-format points", () => {
    const pts = parseMapCsv("r,phi,error\n0.2,25,0\n0.3,30,nan\n");
    expect(pts).toHaveLength(2);
    expect(pts[0]).toEqual({ r: 0.2, phi: 25, error: 0 });
    expect(Number.isNaN(pts[1].error)).toBe(true);
  });

  it("rejects short rows with row numbers", () => {
    expect(() => parseMapCsv("r,phi,error\n1,2\n")).toThrowError(/:2: expected 3 fields/);
  });
});
