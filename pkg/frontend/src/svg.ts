/** Minimal deterministic SVG assembly: no timestamps, no randomness. */

export interface Extent {
  lo: number;
  hi: number;
}

export function extent(values: number[], pad = 0.05): Extent {
  let lo = Infinity;
  let hi = -Infinity;
  for (const v of values) {
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  if (!(hi > lo)) {
    hi = lo + 1;
  }
  const span = hi - lo;
  return { lo: lo - pad * span, hi: hi + pad * span };
}

export function scale(e: Extent, a: number, b: number): (v: number) => number {
  const k = (b - a) / (e.hi - e.lo);
  return (v) => a + (v - e.lo) * k;
}

export function fmt(v: number): string {
  return Number.isInteger(v) ? String(v) : v.toPrecision(6);
}

export const PALETTE = [
  "#d62728",
  "#1f77b4",
  "#2ca02c",
  "#9467bd",
  "#ff7f0e",
  "#8c564b",
  "#e377c2",
  "#17becf",
];

/** Two-stop diverging-free sequential map from deep blue to yellow. */
export function viridisLike(t: number): string {
  const clamped = Math.min(1, Math.max(0, t));
  const stops: [number, number, number][] = [
    [68, 1, 84],
    [59, 82, 139],
    [33, 145, 140],
    [94, 201, 98],
    [253, 231, 37],
  ];
  const x = clamped * (stops.length - 1);
  const i = Math.min(stops.length - 2, Math.floor(x));
  const f = x - i;
  const mix = stops[i].map((c, k) => Math.round(c + f * (stops[i + 1][k] - c)));
  return `rgb(${mix[0]},${mix[1]},${mix[2]})`;
}

export class Svg {
  private parts: string[] = [];

  constructor(
    readonly width: number,
    readonly height: number,
  ) {}

  add(fragment: string): void {
    this.parts.push(fragment);
  }

  circle(x: number, y: number, r: number, fill: string, opacity = 1): void {
    this.add(
      `<circle cx="${fmt(x)}" cy="${fmt(y)}" r="${fmt(r)}" fill="${fill}" fill-opacity="${fmt(opacity)}"/>`,
    );
  }

  polyline(points: [number, number][], stroke: string, width = 1.2, opacity = 1): void {
    const pts = points.map(([x, y]) => `${fmt(x)},${fmt(y)}`).join(" ");
    this.add(
      `<polyline points="${pts}" fill="none" stroke="${stroke}" stroke-width="${fmt(width)}" stroke-opacity="${fmt(opacity)}"/>`,
    );
  }

  rect(x: number, y: number, w: number, h: number, fill: string): void {
    this.add(`<rect x="${fmt(x)}" y="${fmt(y)}" width="${fmt(w)}" height="${fmt(h)}" fill="${fill}"/>`);
  }

  text(x: number, y: number, s: string, size = 12, anchor = "start", rotate?: number): void {
    const transform = rotate !== undefined ? ` transform="rotate(${rotate} ${fmt(x)} ${fmt(y)})"` : "";
    this.add(
      `<text x="${fmt(x)}" y="${fmt(y)}" font-size="${size}" font-family="sans-serif" text-anchor="${anchor}"${transform}>${escapeXml(s)}</text>`,
    );
  }

  frame(x: number, y: number, w: number, h: number): void {
    this.add(
      `<rect x="${fmt(x)}" y="${fmt(y)}" width="${fmt(w)}" height="${fmt(h)}" fill="none" stroke="#333" stroke-width="1"/>`,
    );
  }

  render(): string {
    return (
      `<svg xmlns="http://www.w3.org/2000/svg" width="${this.width}" height="${this.height}" ` +
      `viewBox="0 0 ${this.width} ${this.height}">\n<rect width="100%" height="100%" fill="white"/>\n` +
      this.parts.join("\n") +
      "\n</svg>\n"
    );
  }
}

export function escapeXml(s: string): string {
  return s
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}
