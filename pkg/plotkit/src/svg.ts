/** Minimal dependency-free SVG line charts with min-max bands. */

import { AggregatedSeries } from "./series";

const PALETTE = [
  "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf",
];

const W = 640;
const H = 400;
const M = { left: 56, right: 16, top: 36, bottom: 44 };

function scale(v: number, lo: number, hi: number, outLo: number, outHi: number): number {
  if (hi === lo) return (outLo + outHi) / 2;
  return outLo + ((v - lo) / (hi - lo)) * (outHi - outLo);
}

function polyline(xs: number[], ys: number[]): string {
  return xs.map((x, i) => `${x.toFixed(1)},${ys[i].toFixed(1)}`).join(" ");
}

export function renderChart(title: string, series: AggregatedSeries[]): string {
  const allSteps = series.flatMap((s) => s.steps);
  const allValues = series.flatMap((s) => [...s.min, ...s.max]);
  const xLo = Math.min(...allSteps);
  const xHi = Math.max(...allSteps);
  const yLo = Math.min(0, ...allValues);
  const yHi = Math.max(1, ...allValues);
  const sx = (v: number) => scale(v, xLo, xHi, M.left, W - M.right);
  const sy = (v: number) => scale(v, yLo, yHi, H - M.bottom, M.top);

  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" width="${W}" height="${H}" ` +
      `viewBox="0 0 ${W} ${H}" font-family="sans-serif" font-size="12">`
  );
  parts.push(`<rect width="${W}" height="${H}" fill="white"/>`);
  parts.push(
    `<text x="${W / 2}" y="20" text-anchor="middle" font-size="14">${title}</text>`
  );
  // axes
  parts.push(
    `<line x1="${M.left}" y1="${H - M.bottom}" x2="${W - M.right}" ` +
      `y2="${H - M.bottom}" stroke="black"/>`
  );
  parts.push(
    `<line x1="${M.left}" y1="${M.top}" x2="${M.left}" y2="${H - M.bottom}" stroke="black"/>`
  );
  for (let i = 0; i <= 4; i++) {
    const v = yLo + ((yHi - yLo) * i) / 4;
    parts.push(
      `<text x="${M.left - 6}" y="${sy(v) + 4}" text-anchor="end">${v.toFixed(2)}</text>`
    );
    const x = xLo + ((xHi - xLo) * i) / 4;
    parts.push(
      `<text x="${sx(x)}" y="${H - M.bottom + 16}" text-anchor="middle">` +
        `${Math.round(x)}</text>`
    );
  }
  parts.push(
    `<text x="${W / 2}" y="${H - 8}" text-anchor="middle">environment steps</text>`
  );

  series.forEach((s, i) => {
    const color = PALETTE[i % PALETTE.length];
    const xs = s.steps.map(sx);
    if (s.steps.length > 0) {
      const band =
        polyline(xs, s.max.map(sy)) +
        " " +
        polyline(xs.slice().reverse(), s.min.slice().reverse().map(sy));
      parts.push(`<polygon points="${band}" fill="${color}" opacity="0.15"/>`);
      parts.push(
        `<polyline points="${polyline(xs, s.mean.map(sy))}" fill="none" ` +
          `stroke="${color}" stroke-width="1.8"/>`
      );
    }
    const ly = M.top + 14 * i;
    parts.push(
      `<rect x="${W - M.right - 120}" y="${ly - 8}" width="10" height="10" fill="${color}"/>`
    );
    parts.push(`<text x="${W - M.right - 104}" y="${ly + 1}">${s.agent}</text>`);
  });
  parts.push("</svg>");
  return parts.join("\n") + "\n";
}
