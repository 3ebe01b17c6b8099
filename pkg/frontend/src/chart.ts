// Minimal SVG renderer for the top-k precision curve.

export function precisionCurveSvg(
  points: [number, number][],
  width = 420,
  height = 220,
): string {
  const pad = 34;
  if (points.length === 0) return "";
  const maxK = Math.max(...points.map(([k]) => k));
  const x = (k: number) => pad + ((width - 2 * pad) * k) / maxK;
  const y = (p: number) => height - pad - (height - 2 * pad) * p;
  const path = points.map(([k, p], i) => `${i ? "L" : "M"}${x(k).toFixed(1)},${y(p).toFixed(1)}`).join(" ");
  const dots = points
    .map(
      ([k, p]) =>
        `<circle cx="${x(k).toFixed(1)}" cy="${y(p).toFixed(1)}" r="3.5"></circle>` +
        `<text x="${x(k).toFixed(1)}" y="${(y(p) - 8).toFixed(1)}" text-anchor="middle">${p.toFixed(2)}</text>`,
    )
    .join("");
  const ticks = points
    .map(([k]) => `<text x="${x(k).toFixed(1)}" y="${height - pad + 16}" text-anchor="middle">${k}</text>`)
    .join("");
  return `
<svg viewBox="0 0 ${width} ${height}" class="curve" role="img" aria-label="top-k precision">
  <line x1="${pad}" y1="${height - pad}" x2="${width - pad}" y2="${height - pad}" class="axis"></line>
  <line x1="${pad}" y1="${pad}" x2="${pad}" y2="${height - pad}" class="axis"></line>
  <text x="${pad - 6}" y="${pad}" text-anchor="end">1.0</text>
  <text x="${pad - 6}" y="${height - pad}" text-anchor="end">0.0</text>
  <path d="${path}" class="line"></path>
  ${dots}
  ${ticks}
</svg>`;
}
