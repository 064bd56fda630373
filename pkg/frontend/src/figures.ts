/**
 * Figure renderers.  Each takes parsed tables and returns an SVG string;
 * schema problems throw SchemaError before anything is drawn.
 */

import { Table, column, hasColumn, requireColumns } from "./csv.js";
import { PALETTE, Svg, extent, scale, viridisLike } from "./svg.js";

const W = 640;
const H = 520;
const M = 50;

function scatterBase(xs: number[], ys: number[], title: string): { svg: Svg; sx: (v: number) => number; sy: (v: number) => number } {
  const svg = new Svg(W, H);
  const ex = extent(xs);
  const ey = extent(ys);
  const sx = scale(ex, M, W - M);
  const sy = scale(ey, H - M, M);
  svg.frame(M, M, W - 2 * M, H - 2 * M);
  svg.text(W / 2, 24, title, 14, "middle");
  return { svg, sx, sy };
}

/**
 * Sample scatter with per-block contour polylines: the latent grid images
 * that show which directions each latent block moves the samples.
 */
export function contourPanel(samples: Table, lines: Table, title = "contours over samples"): string {
  requireColumns(samples, ["x1", "x2"], "samples");
  requireColumns(lines, ["block_id", "line_id", "t", "x1", "x2"], "contour lines");
  const xs = column(samples, "x1");
  const ys = column(samples, "x2");
  const lx = column(lines, "x1");
  const ly = column(lines, "x2");
  const { svg, sx, sy } = scatterBase(xs.concat(lx), ys.concat(ly), title);
  for (let i = 0; i < xs.length; i++) {
    svg.circle(sx(xs[i]), sy(ys[i]), 1.4, "#9ecae1", 0.55);
  }
  const blocks = column(lines, "block_id");
  const lineIds = column(lines, "line_id");
  const ts = column(lines, "t");
  type Key = string;
  const groups = new Map<Key, { t: number; x: number; y: number }[]>();
  for (let i = 0; i < blocks.length; i++) {
    const key = `${blocks[i]}|${lineIds[i]}`;
    if (!groups.has(key)) groups.set(key, []);
    groups.get(key)!.push({ t: ts[i], x: lx[i], y: ly[i] });
  }
  const sortedKeys = [...groups.keys()].sort();
  for (const key of sortedKeys) {
    const block = Number(key.split("|")[0]);
    const pts = groups.get(key)!;
    pts.sort((a, b) => a.t - b.t);
    svg.polyline(
      pts.map((p) => [sx(p.x), sy(p.y)] as [number, number]),
      PALETTE[block % PALETTE.length],
      1.4,
      0.9,
    );
  }
  const blockSet = [...new Set(blocks)].sort((a, b) => a - b);
  blockSet.forEach((b, i) => {
    svg.text(M + 8, M + 18 + 16 * i, `latent block ${b}`, 12);
    svg.rect(M + 70 + 14, M + 10 + 16 * i, 18, 4, PALETTE[b % PALETTE.length]);
  });
  return svg.render();
}

/**
 * Variable-rank density scatter: two coordinate projections colored by the
 * manifold-corrected log density, rank-1 points drawn as open rings.
 */
export function densityScatter(table: Table, title = "manifold-corrected density"): string {
  requireColumns(table, ["x1", "x2", "x3", "log_pm", "predicted_rank"], "density table");
  const x1 = column(table, "x1");
  const x2 = column(table, "x2");
  const x3 = column(table, "x3");
  const lp = column(table, "log_pm");
  const rank = column(table, "predicted_rank");
  const el = extent(lp, 0);
  const norm = (v: number) => (v - el.lo) / (el.hi - el.lo || 1);

  const svg = new Svg(W * 2, H);
  svg.text(W, 24, title, 14, "middle");
  const panels: [number[], number[], string][] = [
    [x1, x2, "x1 vs x2"],
    [x1, x3, "x1 vs x3"],
  ];
  panels.forEach(([xs, ys, label], p) => {
    const off = p * W;
    const ex = extent(xs);
    const ey = extent(ys);
    const sx = scale(ex, off + M, off + W - M);
    const sy = scale(ey, H - M, M);
    svg.frame(off + M, M, W - 2 * M, H - 2 * M);
    svg.text(off + W / 2, H - 14, label, 12, "middle");
    for (let i = 0; i < xs.length; i++) {
      const color = viridisLike(norm(lp[i]));
      if (rank[i] <= 1) {
        svg.add(
          `<circle cx="${sx(xs[i]).toPrecision(6)}" cy="${sy(ys[i]).toPrecision(6)}" r="2.2" fill="none" stroke="${color}" stroke-width="1"/>`,
        );
      } else {
        svg.circle(sx(xs[i]), sy(ys[i]), 1.8, color, 0.85);
      }
    }
  });
  svg.text(16, H - 14, "rings: rank-1 points", 11);
  return svg.render();
}

/** Similarity heatmap: contours (rows) vs principal components (columns). */
export function similarityHeatmap(table: Table, title = "contour / component alignment"): string {
  if (table.columns.length < 1 || !table.columns.every((c) => /^pc\d+$/.test(c))) {
    const cols = table.columns.join(", ");
    throw new Error(`similarity matrix header must be pc1..pcN, got: [${cols}]`);
  }
  const n = table.columns.length;
  const svg = new Svg(W, H);
  svg.text(W / 2, 24, title, 14, "middle");
  const cell = Math.min((W - 2 * M - 60) / n, (H - 2 * M - 40) / table.rows.length);
  const x0 = M + 60;
  const y0 = M + 20;
  table.rows.forEach((row, i) => {
    row.forEach((v, j) => {
      svg.rect(x0 + j * cell, y0 + i * cell, cell - 1, cell - 1, viridisLike(v));
    });
  });
  for (let j = 0; j < n; j++) {
    svg.text(x0 + j * cell + cell / 2, y0 - 6, String(j + 1), 10, "middle");
  }
  for (let i = 0; i < table.rows.length; i++) {
    svg.text(x0 - 8, y0 + i * cell + cell / 2 + 3, String(i + 1), 10, "end");
  }
  svg.text(x0 + (n * cell) / 2, y0 + table.rows.length * cell + 24,
    "principal components by eigenvalue", 12, "middle");
  svg.text(x0 - 36, y0 + (table.rows.length * cell) / 2,
    "contours by diag(J^T J)", 12, "middle", -90);
  return svg.render();
}

/** Histogram of (predicted - true) log density. */
export function errorHistogram(table: Table, bins = 40, title = "log-density error"): string {
  requireColumns(table, ["log_pm", "true_logpdf"], "density table");
  const lp = column(table, "log_pm");
  const truth = column(table, "true_logpdf");
  const err = lp.map((v, i) => v - truth[i]);
  const e = extent(err, 0.02);
  const counts = new Array<number>(bins).fill(0);
  const w = (e.hi - e.lo) / bins;
  for (const v of err) {
    const b = Math.min(bins - 1, Math.max(0, Math.floor((v - e.lo) / w)));
    counts[b] += 1;
  }
  const maxCount = Math.max(...counts);
  const svg = new Svg(W, H);
  svg.text(W / 2, 24, title, 14, "middle");
  svg.frame(M, M, W - 2 * M, H - 2 * M);
  const sx = scale(e, M, W - M);
  const sy = scale({ lo: 0, hi: maxCount }, H - M, M);
  counts.forEach((c, b) => {
    const xa = sx(e.lo + b * w);
    const xb = sx(e.lo + (b + 1) * w);
    svg.rect(xa, sy(c), xb - xa - 0.5, sy(0) - sy(c), "#1f77b4");
  });
  svg.polyline(
    [
      [sx(0), sy(0)],
      [sx(0), M],
    ],
    "#d62728",
    1.5,
  );
  svg.text(W / 2, H - 14, "predicted log density minus true (nats)", 12, "middle");
  return svg.render();
}
