/**
 * Render one figure from pmflow CSV artifacts.
 *
 * Usage:
 *   node dist/cli.js contour-panel --samples s.csv --lines l.csv --out fig.svg
 *   node dist/cli.js density-scatter --input dens.csv --out fig.svg
 *   node dist/cli.js similarity-heatmap --input sim.csv --out fig.svg
 *   node dist/cli.js error-histogram --input dens.csv --out fig.svg
 *
 * Exits 0 on success; 1 with a schema diagnostic on malformed input; 2 on
 * usage errors.  Nothing is written unless rendering succeeds.
 */

import { readFileSync, renameSync, writeFileSync } from "node:fs";
import { SchemaError, parseCsv } from "./csv.js";
import { contourPanel, densityScatter, errorHistogram, similarityHeatmap } from "./figures.js";

function parseFlags(argv: string[]): Map<string, string> {
  const flags = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i];
    if (!key.startsWith("--") || i + 1 >= argv.length) {
      throw new UsageError(`malformed flag pair near '${key}'`);
    }
    flags.set(key.slice(2), argv[i + 1]);
  }
  return flags;
}

class UsageError extends Error {}

function need(flags: Map<string, string>, name: string): string {
  const v = flags.get(name);
  if (v === undefined) {
    throw new UsageError(`missing required flag --${name}`);
  }
  return v;
}

function load(path: string) {
  return parseCsv(readFileSync(path, "utf8"), path);
}

export function run(argv: string[]): number {
  try {
    const [kind, ...rest] = argv;
    if (!kind) {
      throw new UsageError(
        "expected a figure kind: contour-panel | density-scatter | similarity-heatmap | error-histogram",
      );
    }
    const flags = parseFlags(rest);
    const out = need(flags, "out");
    let svg: string;
    switch (kind) {
      case "contour-panel":
        svg = contourPanel(load(need(flags, "samples")), load(need(flags, "lines")),
          flags.get("title") ?? "contours over samples");
        break;
      case "density-scatter":
        svg = densityScatter(load(need(flags, "input")),
          flags.get("title") ?? "manifold-corrected density");
        break;
      case "similarity-heatmap":
        svg = similarityHeatmap(load(need(flags, "input")),
          flags.get("title") ?? "contour / component alignment");
        break;
      case "error-histogram":
        svg = errorHistogram(load(need(flags, "input")), Number(flags.get("bins") ?? 40),
          flags.get("title") ?? "log-density error");
        break;
      default:
        throw new UsageError(`unknown figure kind '${kind}'`);
    }
    const tmp = out + ".tmp";
    writeFileSync(tmp, svg);
    renameSync(tmp, out);
    console.log(`wrote ${out}`);
    return 0;
  } catch (err) {
    if (err instanceof UsageError) {
      console.error(`usage error: ${err.message}`);
      return 2;
    }
    if (err instanceof SchemaError) {
      console.error(`schema error: ${err.message}`);
      return 1;
    }
    console.error(`error: ${(err as Error).message}`);
    return 1;
  }
}

const invokedDirectly = process.argv[1]?.endsWith("cli.js") ?? false;
if (invokedDirectly) {
  process.exit(run(process.argv.slice(2)));
}
