/**
 * CSV ingestion with strict schema checks.
 *
 * Every reader validates the header against the columns a figure needs and
 * fails with a diagnostic naming both the missing and the available columns.
 * Rows are never silently dropped: a malformed cell aborts with its line
 * number.
 */

export class SchemaError extends Error {}

export interface Table {
  columns: string[];
  rows: number[][];
}

export function parseCsv(text: string, source = "<input>"): Table {
  const lines = text.split(/\r?\n/).filter((l) => l.trim().length > 0);
  if (lines.length === 0) {
    throw new SchemaError(`${source}: empty input (no header row)`);
  }
  const columns = lines[0].split(",").map((c) => c.trim());
  const rows: number[][] = [];
  for (let i = 1; i < lines.length; i++) {
    const cells = lines[i].split(",");
    if (cells.length !== columns.length) {
      throw new SchemaError(
        `${source}: line ${i + 1} has ${cells.length} cells, header has ${columns.length}`,
      );
    }
    const row = cells.map((c) => Number(c));
    const bad = row.findIndex((v) => Number.isNaN(v));
    if (bad >= 0) {
      throw new SchemaError(
        `${source}: line ${i + 1}, column '${columns[bad]}' is not numeric: '${cells[bad]}'`,
      );
    }
    rows.push(row);
  }
  if (rows.length === 0) {
    throw new SchemaError(`${source}: no data rows`);
  }
  return { columns, rows };
}

export function requireColumns(table: Table, needed: string[], source = "<input>"): void {
  const missing = needed.filter((c) => !table.columns.includes(c));
  if (missing.length > 0) {
    throw new SchemaError(
      `${source}: missing column(s) [${missing.join(", ")}]; ` +
        `available: [${table.columns.join(", ")}]`,
    );
  }
}

export function column(table: Table, name: string): number[] {
  const i = table.columns.indexOf(name);
  if (i < 0) {
    throw new SchemaError(`column '${name}' not present`);
  }
  return table.rows.map((r) => r[i]);
}

export function hasColumn(table: Table, name: string): boolean {
  return table.columns.includes(name);
}
