import { describe, expect, it } from "vitest";
import { parseCsv, requireColumns, SchemaError } from "../src/csv.js";
import {
  contourPanel,
  densityScatter,
  errorHistogram,
  similarityHeatmap,
} from "../src/figures.js";

const samplesCsv = "x1,x2\n0.1,0.2\n-0.4,0.8\n1.2,-0.3\n";
const linesCsv = [
  "block_id,line_id,t,x1,x2",
  "0,0,-1,0.0,0.0",
  "0,0,0,0.5,0.1",
  "0,0,1,1.0,0.2",
  "1,0,-1,0.2,-1.0",
  "1,0,1,0.2,1.0",
].join("\n");
const densityCsv = [
  "x1,x2,x3,log_pm,predicted_rank,true_logpdf,true_rank",
  "0.1,0.0,0.09,-1.2,1,-1.1,1",
  "2.0,0.5,0.9,-2.5,2,-2.4,2",
  "-2.0,-0.5,-0.9,-3.0,2,-3.2,2",
].join("\n");
const simCsv = "pc1,pc2\n0.98,0.02\n0.05,0.95\n";

describe("csv parsing", () => {
  it("parses rows and validates columns", () => {
    const t = parseCsv(samplesCsv);
    expect(t.columns).toEqual(["x1", "x2"]);
    expect(t.rows).toHaveLength(3);
    expect(() => requireColumns(t, ["x1", "nope"])).toThrow(SchemaError);
  });

  it("rejects empty input", () => {
    expect(() => parseCsv("")).toThrow(SchemaError);
    expect(() => parseCsv("x1,x2\n")).toThrow(/no data rows/);
  });

  it("rejects non-numeric cells with line diagnostics", () => {
    expect(() => parseCsv("x1,x2\n1,banana\n")).toThrow(/line 2.*x2/);
  });

  it("rejects ragged rows", () => {
    expect(() => parseCsv("x1,x2\n1\n")).toThrow(/line 2/);
  });
});

describe("contour panel", () => {
  it("renders polylines for each block", () => {
    const svg = contourPanel(parseCsv(samplesCsv), parseCsv(linesCsv));
    expect(svg).toContain("<svg");
    expect((svg.match(/<polyline/g) ?? []).length).toBe(2);
    expect(svg).toContain("latent block 0");
  });

  it("fails with a named-column diagnostic on renamed input", () => {
    const renamed = linesCsv.replace("block_id", "block");
    expect(() => contourPanel(parseCsv(samplesCsv), parseCsv(renamed))).toThrow(
      /missing column\(s\) \[block_id\]/,
    );
  });

  it("is deterministic", () => {
    const a = contourPanel(parseCsv(samplesCsv), parseCsv(linesCsv));
    const b = contourPanel(parseCsv(samplesCsv), parseCsv(linesCsv));
    expect(a).toBe(b);
  });
});

describe("density scatter", () => {
  it("renders both projections and rank-1 rings", () => {
    const svg = densityScatter(parseCsv(densityCsv));
    expect(svg).toContain("x1 vs x2");
    expect(svg).toContain("x1 vs x3");
    expect(svg).toContain('fill="none" stroke="rgb');
  });

  it("fails on missing log_pm", () => {
    const broken = densityCsv.replace("log_pm", "logpm");
    expect(() => densityScatter(parseCsv(broken))).toThrow(/log_pm/);
  });
});

describe("similarity heatmap", () => {
  it("renders one cell per entry with axis labels", () => {
    const svg = similarityHeatmap(parseCsv(simCsv));
    expect((svg.match(/<rect/g) ?? []).length).toBeGreaterThanOrEqual(4);
    expect(svg).toContain("principal components by eigenvalue");
    expect(svg).toContain("contours by diag(J^T J)");
  });

  it("rejects non-pc headers", () => {
    expect(() => similarityHeatmap(parseCsv("a,b\n1,0\n0,1\n"))).toThrow(/pc1\.\.pcN/);
  });
});

describe("error histogram", () => {
  it("renders bars and the zero marker", () => {
    const svg = errorHistogram(parseCsv(densityCsv), 10);
    expect((svg.match(/<rect/g) ?? []).length).toBeGreaterThan(3);
    expect(svg).toContain("predicted log density minus true");
  });

  it("fails without ground truth", () => {
    const noTruth = parseCsv("x1,x2,x3,log_pm,predicted_rank\n0,0,0,-1,1\n");
    expect(() => errorHistogram(noTruth)).toThrow(/true_logpdf/);
  });
});
