import type { BoardPoint, MetricDimension } from "./types";

function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function fmt(value: number): string {
  if (Number.isInteger(value)) return String(value);
  return String(Number(value.toPrecision(6)));
}

function betterOrEqual(a: number, b: number, direction: string): boolean {
  return direction === "minimize" ? a <= b : a >= b;
}

function strictlyBetter(a: number, b: number, direction: string): boolean {
  return direction === "minimize" ? a < b : a > b;
}

/** a dominates b in the current two-dimensional projection. */
function dominatesInView(a: BoardPoint, b: BoardPoint, xDir: string, yDir: string): boolean {
  return (
    betterOrEqual(a.x, b.x, xDir) &&
    betterOrEqual(a.y, b.y, yDir) &&
    (strictlyBetter(a.x, b.x, xDir) || strictlyBetter(a.y, b.y, yDir))
  );
}

export interface ViewRelations {
  /** Uids of points that dominate the inspected one, sorted. */
  dominators: string[];
  /** Uids the inspected point dominates, sorted. */
  dominated: string[];
}

/**
 * Dominance neighbours of one point among the points of the current view.
 *
 * This is the single place the client reasons about dominance at all, and it
 * only does so to explain a point, never to decide frontier membership. The
 * service's on_frontier flag stays authoritative; by construction a point is
 * flagged exactly when this list of dominators comes back empty.
 */
export function relationsInView(
  uid: string,
  points: BoardPoint[],
  xDir: string,
  yDir: string,
): ViewRelations {
  const self = points.find((p) => p.uid === uid);
  if (!self) return { dominators: [], dominated: [] };
  const dominators: string[] = [];
  const dominated: string[] = [];
  for (const other of points) {
    if (other.uid === uid) continue;
    if (dominatesInView(other, self, xDir, yDir)) dominators.push(other.uid);
    if (dominatesInView(self, other, xDir, yDir)) dominated.push(other.uid);
  }
  dominators.sort();
  dominated.sort();
  return { dominators, dominated };
}

function uidList(uids: string[], emptyText: string): string {
  if (uids.length === 0) return `<p class="none">${escapeHtml(emptyText)}</p>`;
  const items = uids
    .map((uid) => `<li><a href="#" data-uid="${escapeHtml(uid)}">${escapeHtml(uid)}</a></li>`)
    .join("");
  return `<ul class="uid-list">${items}</ul>`;
}

/**
 * HTML for the inspection panel of one point.
 *
 * When the uid is no longer part of the view (filtered away, re-judged, or
 * replaced since the user clicked it) the panel degrades to a staleness note
 * instead of showing numbers that no longer exist on the board.
 */
export function renderDetail(
  uid: string,
  points: BoardPoint[],
  space: MetricDimension[],
  dimX: string,
  dimY: string,
): string {
  const point = points.find((p) => p.uid === uid);
  if (!point) {
    return (
      `<div class="detail stale"><h3>${escapeHtml(uid)}</h3>` +
      `<p>this point is no longer in the current view; the board has moved on ` +
      `since it was selected</p></div>`
    );
  }

  const unitOf = new Map(space.map((d) => [d.id, d.unit]));
  const xDir = space.find((d) => d.id === dimX)?.direction ?? "minimize";
  const yDir = space.find((d) => d.id === dimY)?.direction ?? "minimize";
  const relations = relationsInView(uid, points, xDir, yDir);

  const metricRows = Object.keys(point.metrics)
    .sort()
    .map((id) => {
      const unit = unitOf.get(id) ?? "";
      const spread = point.dispersion[id];
      const spreadText = spread
        ? `min ${fmt(spread.min)}, max ${fmt(spread.max)}, iqr ${fmt(spread.iqr)}`
        : "single run";
      return (
        `<tr><th>${escapeHtml(id)}</th>` +
        `<td>${fmt(point.metrics[id])} ${escapeHtml(unit)}</td>` +
        `<td class="spread">${escapeHtml(spreadText)}</td></tr>`
      );
    })
    .join("");

  const env = point.environment;
  const platform = env.platform;
  const envBits = [
    `${env.os_name} ${env.os_version}`,
    platform.cpu,
    `${(platform.ram_bytes / 2 ** 30).toFixed(1)} GiB RAM`,
  ];
  if (platform.accelerator && platform.accelerator !== "none") {
    envBits.push(platform.accelerator);
  }
  if (platform.labels.length > 0) {
    envBits.push(`labels: ${platform.labels.join(", ")}`);
  }

  const refText = (ref: { tags?: string[]; uid?: string; version?: string } | null): string => {
    if (!ref) return "none";
    const base = ref.tags && ref.tags.length > 0 ? ref.tags.join(",") : ref.uid ?? "?";
    return ref.version ? `${base}@${ref.version}` : base;
  };

  const distanceLine = point.on_frontier
    ? `on the frontier (distance 0)`
    : `distance to frontier: ${fmt(point.distance)}`;

  return [
    `<div class="detail" data-uid="${escapeHtml(point.uid)}">`,
    `<h3>${escapeHtml(point.uid)} <span class="status ${escapeHtml(point.status)}">${escapeHtml(point.status)}</span></h3>`,
    `<p class="distance">${distanceLine}</p>`,
    `<p class="submitted">submitted ${escapeHtml(point.submitted_at)}</p>`,
    `<table class="metrics"><thead><tr><th>metric</th><th>median</th><th>dispersion</th></tr></thead>`,
    `<tbody>${metricRows}</tbody></table>`,
    `<p class="environment">${escapeHtml(envBits.join(" / "))}</p>`,
    `<p class="workflow">program ${escapeHtml(refText(point.workflow.program_ref))}, ` +
      `model ${escapeHtml(refText(point.workflow.model_ref))}, ` +
      `dataset ${escapeHtml(refText(point.workflow.dataset_ref))}, ` +
      `${point.workflow.repetitions} repetitions</p>`,
    `<h4>dominated by</h4>`,
    uidList(relations.dominators, "nothing in this view dominates it"),
    `<h4>dominates</h4>`,
    uidList(relations.dominated, "it dominates nothing in this view"),
    `</div>`,
  ].join("\n");
}
