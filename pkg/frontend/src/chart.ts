// Tiny inline-SVG line chart.  Pure string builders so the scaling math is
// unit-testable; no chart library for two polylines and four tick labels.

export interface ChartLine {
  name: string;
  values: number[];
  color: string;
}

const W = 560;
const H = 220;
const PAD = 36;

/** Map a series onto "x,y x,y ..." polyline points inside the plot box. */
export function polylinePoints(
  values: number[],
  lo: number,
  hi: number,
  width = W,
  height = H,
  pad = PAD,
): string {
  if (values.length === 0) {
    return "";
  }
  const span = hi - lo || 1; // a flat series draws along the floor, not NaN
  const stepX =
    values.length > 1 ? (width - 2 * pad) / (values.length - 1) : 0;
  return values
    .map((v, i) => {
      const x = pad + stepX * i;
      const y = height - pad - ((v - lo) / span) * (height - 2 * pad);
      return `${x.toFixed(1)},${y.toFixed(1)}`;
    })
    .join(" ");
}

export function chartSvg(lines: ChartLine[], yLabel: string): string {
  const all = lines.flatMap((l) => l.values);
  if (all.length === 0) {
    return "";
  }
  const lo = Math.min(...all);
  const hi = Math.max(...all);
  const polys = lines
    .map(
      (l) =>
        `<polyline fill="none" stroke="${l.color}" stroke-width="2" ` +
        `points="${polylinePoints(l.values, lo, hi)}"/>`,
    )
    .join("");
  const legend = lines
    .map(
      (l, i) =>
        `<text x="${PAD + i * 140}" y="16" fill="${l.color}" ` +
        `font-size="12">${l.name}</text>`,
    )
    .join("");
  const n = Math.max(...lines.map((l) => l.values.length));
  return (
    `<svg viewBox="0 0 ${W} ${H}" role="img" aria-label="${yLabel}">` +
    `<rect x="${PAD}" y="${PAD}" width="${W - 2 * PAD}" height="${H - 2 * PAD}"` +
    ` fill="none" stroke="#8884" stroke-width="1"/>` +
    legend +
    `<text x="4" y="${PAD + 4}" font-size="11" fill="#888">${fmt(hi)}</text>` +
    `<text x="4" y="${H - PAD}" font-size="11" fill="#888">${fmt(lo)}</text>` +
    `<text x="${PAD}" y="${H - 8}" font-size="11" fill="#888">0</text>` +
    `<text x="${W - PAD}" y="${H - 8}" font-size="11" fill="#888" ` +
    `text-anchor="end">${n - 1}</text>` +
    polys +
    `</svg>`
  );
}

function fmt(v: number): string {
  return Math.abs(v) >= 100 ? v.toFixed(0) : v.toPrecision(3);
}
