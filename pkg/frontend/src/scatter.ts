import type { BoardPoint, MetricDimension } from "./types";

export interface ScatterOptions {
  width?: number;
  height?: number;
  /** Uids that just arrived on the frontier; they get a "fresh" badge class. */
  fresh?: Set<string>;
}

const MARGIN = { top: 20, right: 22, bottom: 48, left: 66 };
const INSET = 12; // keep marks off the axis lines

function escapeXml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&apos;");
}

function fmt(value: number): string {
  if (Number.isInteger(value)) return String(value);
  return String(Number(value.toPrecision(4)));
}

function findDim(space: MetricDimension[], id: string): MetricDimension {
  const dim = space.find((d) => d.id === id);
  if (!dim) throw new Error(`unknown dimension ${id}`);
  return dim;
}

/**
 * Fraction of the axis that a value should sit at, where 1 is always the
 * "better" end. Minimized dimensions are therefore reversed, which is what
 * keeps better up and to the right no matter the direction.
 */
function goodness(value: number, lo: number, hi: number, direction: string): number {
  const span = hi - lo;
  const ascending = span > 0 ? (value - lo) / span : 0.5;
  return direction === "maximize" ? ascending : 1 - ascending;
}

/**
 * Render one view of the board as a standalone SVG string.
 *
 * One circle per point, keyed by data-uid. Frontier members, as flagged by
 * the service, are highlighted and joined by a staircase path. Output is a
 * pure function of the arguments, so identical polls produce byte-identical
 * markup and the page can skip touching the DOM entirely.
 */
export function renderScatter(
  points: BoardPoint[],
  space: MetricDimension[],
  dimX: string,
  dimY: string,
  options: ScatterOptions = {},
): string {
  const width = options.width ?? 640;
  const height = options.height ?? 420;
  const fresh = options.fresh ?? new Set<string>();
  const xDim = findDim(space, dimX);
  const yDim = findDim(space, dimY);

  const open = `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${width} ${height}" class="scatter" role="img">`;
  if (points.length === 0) {
    return (
      open +
      `\n<text class="empty" x="${width / 2}" y="${height / 2}" text-anchor="middle">` +
      `no submissions match this view yet</text>\n</svg>`
    );
  }

  const xs = points.map((p) => p.x);
  const ys = points.map((p) => p.y);
  const xLo = Math.min(...xs);
  const xHi = Math.max(...xs);
  const yLo = Math.min(...ys);
  const yHi = Math.max(...ys);

  const plotLeft = MARGIN.left + INSET;
  const plotRight = width - MARGIN.right - INSET;
  const plotTop = MARGIN.top + INSET;
  const plotBottom = height - MARGIN.bottom - INSET;

  const px = (p: BoardPoint): number =>
    plotLeft + goodness(p.x, xLo, xHi, xDim.direction) * (plotRight - plotLeft);
  const py = (p: BoardPoint): number =>
    plotBottom - goodness(p.y, yLo, yHi, yDim.direction) * (plotBottom - plotTop);

  const parts: string[] = [open];

  const axisY = height - MARGIN.bottom;
  parts.push(
    `<line class="axis" x1="${MARGIN.left}" y1="${axisY}" x2="${width - MARGIN.right}" y2="${axisY}"/>`,
    `<line class="axis" x1="${MARGIN.left}" y1="${MARGIN.top}" x2="${MARGIN.left}" y2="${axisY}"/>`,
  );

  // axis end labels carry the raw extremes; on a minimized axis the larger
  // value lands at the left or bottom end
  const xLeftValue = xDim.direction === "maximize" ? xLo : xHi;
  const xRightValue = xDim.direction === "maximize" ? xHi : xLo;
  const yBottomValue = yDim.direction === "maximize" ? yLo : yHi;
  const yTopValue = yDim.direction === "maximize" ? yHi : yLo;
  parts.push(
    `<text class="tick" x="${plotLeft}" y="${axisY + 16}" text-anchor="middle">${fmt(xLeftValue)}</text>`,
    `<text class="tick" x="${plotRight}" y="${axisY + 16}" text-anchor="middle">${fmt(xRightValue)}</text>`,
    `<text class="tick" x="${MARGIN.left - 6}" y="${plotBottom + 4}" text-anchor="end">${fmt(yBottomValue)}</text>`,
    `<text class="tick" x="${MARGIN.left - 6}" y="${plotTop + 4}" text-anchor="end">${fmt(yTopValue)}</text>`,
  );

  const xLabel = `${xDim.id} (${xDim.unit})`;
  const yLabel = `${yDim.id} (${yDim.unit})`;
  const midX = (MARGIN.left + width - MARGIN.right) / 2;
  const midY = (MARGIN.top + axisY) / 2;
  parts.push(
    `<text class="label" x="${midX}" y="${height - 10}" text-anchor="middle">${escapeXml(xLabel)}</text>`,
    `<text class="label" transform="rotate(-90 16 ${midY})" x="16" y="${midY}" text-anchor="middle">${escapeXml(yLabel)}</text>`,
    `<text class="hint" x="${width - MARGIN.right}" y="${axisY + 32}" text-anchor="end">better &#8594;</text>`,
    `<text class="hint" transform="rotate(-90 ${MARGIN.left + 14} ${MARGIN.top + 40})" x="${MARGIN.left + 14}" y="${MARGIN.top + 40}" text-anchor="end">better &#8594;</text>`,
  );

  const frontier = points
    .filter((p) => p.on_frontier)
    .sort((a, b) => px(a) - px(b) || (a.uid < b.uid ? -1 : 1));
  if (frontier.length > 1) {
    let d = `M${px(frontier[0]).toFixed(2)} ${py(frontier[0]).toFixed(2)}`;
    for (const point of frontier.slice(1)) {
      d += ` H${px(point).toFixed(2)} V${py(point).toFixed(2)}`;
    }
    parts.push(`<path class="frontier-path" d="${d}"/>`);
  }

  const ordered = [...points].sort((a, b) => (a.uid < b.uid ? -1 : 1));
  for (const point of ordered) {
    const classes = ["point"];
    if (point.on_frontier) classes.push("frontier");
    if (point.status === "pending") classes.push("pending");
    if (fresh.has(point.uid)) classes.push("fresh");
    const r = point.on_frontier ? 6 : 4.5;
    parts.push(
      `<circle class="${classes.join(" ")}" data-uid="${escapeXml(point.uid)}" ` +
        `cx="${px(point).toFixed(2)}" cy="${py(point).toFixed(2)}" r="${r}">` +
        `<title>${escapeXml(`${point.uid} ${dimX}=${fmt(point.x)} ${dimY}=${fmt(point.y)}`)}</title>` +
        `</circle>`,
    );
  }

  parts.push(`</svg>`);
  return parts.join("\n");
}
