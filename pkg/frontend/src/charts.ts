/** Minimal SVG line charts.
 *
 * Every polyline passes through the exact payload samples; no smoothing or
 * resampling, so extremes are rendered as received.
 */

export interface Series {
  label: string;
  values: number[];
}

export interface ChartOptions {
  width?: number;
  height?: number;
  /** horizontal guide lines whose values must be inside the y-range */
  guides?: number[];
  /** vertical marker drawn at this sample index (e.g. settling time) */
  marker?: number | null;
  title?: string;
}

const COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
const PAD = 24;

export function chartRange(series: Series[], guides: number[] = []): [number, number] {
  let lo = Infinity;
  let hi = -Infinity;
  for (const s of series) {
    for (const v of s.values) {
      if (v < lo) lo = v;
      if (v > hi) hi = v;
    }
  }
  for (const g of guides) {
    if (g < lo) lo = g;
    if (g > hi) hi = g;
  }
  if (!isFinite(lo)) {
    lo = 0;
    hi = 1;
  }
  if (lo === hi) {
    lo -= 0.5;
    hi += 0.5;
  }
  return [lo, hi];
}

export function pointString(
  values: number[],
  range: [number, number],
  width: number,
  height: number,
): string {
  const [lo, hi] = range;
  const n = values.length;
  const plotW = width - 2 * PAD;
  const plotH = height - 2 * PAD;
  return values
    .map((v, i) => {
      const x = PAD + (n === 1 ? 0 : (i / (n - 1)) * plotW);
      const y = PAD + (1 - (v - lo) / (hi - lo)) * plotH;
      return `${x.toFixed(2)},${y.toFixed(2)}`;
    })
    .join(" ");
}

export function lineChart(series: Series[], opts: ChartOptions = {}): string {
  const width = opts.width ?? 320;
  const height = opts.height ?? 180;
  const guides = opts.guides ?? [];
  const range = chartRange(series, guides);
  const [lo, hi] = range;
  const plotW = width - 2 * PAD;
  const plotH = height - 2 * PAD;
  const parts: string[] = [];
  parts.push(
    `<svg class="chart" viewBox="0 0 ${width} ${height}" xmlns="http://www.w3.org/2000/svg">`,
  );
  if (opts.title) {
    parts.push(`<text x="${width / 2}" y="14" text-anchor="middle" class="chart-title">${opts.title}</text>`);
  }
  parts.push(
    `<rect x="${PAD}" y="${PAD}" width="${plotW}" height="${plotH}" fill="none" stroke="#ccc"/>`,
  );
  for (const g of guides) {
    const y = PAD + (1 - (g - lo) / (hi - lo)) * plotH;
    parts.push(
      `<line class="guide" x1="${PAD}" x2="${PAD + plotW}" y1="${y.toFixed(2)}" y2="${y.toFixed(2)}" ` +
        `stroke="#999" stroke-dasharray="4 3"/>`,
    );
  }
  const n = Math.max(...series.map((s) => s.values.length), 1);
  if (opts.marker !== null && opts.marker !== undefined && n > 1) {
    const x = PAD + (opts.marker / (n - 1)) * plotW;
    parts.push(
      `<line class="marker" x1="${x.toFixed(2)}" x2="${x.toFixed(2)}" y1="${PAD}" ` +
        `y2="${PAD + plotH}" stroke="#444" stroke-dasharray="2 2"/>`,
    );
  }
  series.forEach((s, k) => {
    parts.push(
      `<polyline fill="none" stroke="${COLORS[k % COLORS.length]}" stroke-width="1.5" ` +
        `data-label="${s.label}" points="${pointString(s.values, range, width, height)}"/>`,
    );
  });
  parts.push("</svg>");
  return parts.join("");
}
