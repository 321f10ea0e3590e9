import type { BoardPoint } from "./types";

/**
 * Everything the page needs to reproduce a view. The whole struct round-trips
 * through the URL query string, so any screen someone is looking at can be
 * shared by copying the address bar.
 */
export interface BoardState {
  tournamentUid: string;
  dimX: string;
  dimY: string;
  /** Conjunctive platform label filters, key -> value. */
  filters: Record<string, string>;
  showPending: boolean;
  pollIntervalS: number;
}

export const MIN_POLL_S = 2;
export const MAX_BACKOFF_S = 60;

const DEFAULT_POLL_S = 5;
const DEFAULT_DIM_X = "latency_s";
const DEFAULT_DIM_Y = "accuracy";

/** Raised by state transitions that would produce an invalid view. */
export class StateError extends Error {}

export function defaultState(tournamentUid: string): BoardState {
  return {
    tournamentUid,
    dimX: DEFAULT_DIM_X,
    dimY: DEFAULT_DIM_Y,
    filters: {},
    showPending: true,
    pollIntervalS: DEFAULT_POLL_S,
  };
}

export function withAxes(state: BoardState, dimX: string, dimY: string): BoardState {
  if (dimX === dimY) {
    throw new StateError(`axes must differ, both are ${dimX}`);
  }
  return { ...state, dimX, dimY };
}

export function withFilter(state: BoardState, key: string, value: string): BoardState {
  // the wire format is label=key:value, so a colon in the key would be ambiguous
  if (!key || !value) {
    throw new StateError("filters need both a label key and a value");
  }
  if (key.includes(":")) {
    throw new StateError("label keys may not contain ':'");
  }
  return { ...state, filters: { ...state.filters, [key]: value } };
}

export function withoutFilter(state: BoardState, key: string): BoardState {
  const filters = { ...state.filters };
  delete filters[key];
  return { ...state, filters };
}

export function withPending(state: BoardState, showPending: boolean): BoardState {
  return { ...state, showPending };
}

export function withPollInterval(state: BoardState, seconds: number): BoardState {
  if (!Number.isFinite(seconds) || seconds < MIN_POLL_S) {
    throw new StateError(`poll interval must be at least ${MIN_POLL_S}s`);
  }
  return { ...state, pollIntervalS: seconds };
}

/** Serialize a state into a query string (no leading '?'). */
export function encodeState(state: BoardState): string {
  const params = new URLSearchParams();
  params.set("t", state.tournamentUid);
  params.set("x", state.dimX);
  params.set("y", state.dimY);
  for (const key of Object.keys(state.filters).sort()) {
    params.append("label", `${key}:${state.filters[key]}`);
  }
  params.set("pending", state.showPending ? "1" : "0");
  params.set("poll", String(state.pollIntervalS));
  return params.toString();
}

/**
 * Rebuild a state from a query string. Unknown keys are ignored and illegal
 * values are coerced back into range rather than rejected, so a mangled link
 * still opens a usable page.
 */
export function decodeState(search: string): BoardState {
  const raw = search.startsWith("?") ? search.slice(1) : search;
  const params = new URLSearchParams(raw);
  const state = defaultState(params.get("t") ?? "");
  const dimX = params.get("x");
  const dimY = params.get("y");
  if (dimX) state.dimX = dimX;
  if (dimY) state.dimY = dimY;
  if (state.dimX === state.dimY) {
    state.dimX = DEFAULT_DIM_X;
    state.dimY = DEFAULT_DIM_Y;
  }
  for (const entry of params.getAll("label")) {
    const split = entry.indexOf(":");
    if (split > 0 && split < entry.length - 1) {
      state.filters[entry.slice(0, split)] = entry.slice(split + 1);
    }
  }
  if (params.get("pending") === "0") state.showPending = false;
  const poll = Number(params.get("poll"));
  if (params.get("poll") !== null && Number.isFinite(poll)) {
    state.pollIntervalS = Math.max(MIN_POLL_S, poll);
  }
  return state;
}

/** Delay to use after one more consecutive poll failure, capped at 60s. */
export function nextBackoffS(currentS: number): number {
  return Math.min(Math.max(currentS, 1) * 2, MAX_BACKOFF_S);
}

/**
 * Uids that are on the frontier now but were not in the previous poll,
 * either brand new or freshly promoted. Drives the transient "new" badge.
 * The very first poll has no baseline, so nothing counts as new.
 */
export function freshFrontierUids(
  previous: BoardPoint[] | undefined,
  next: BoardPoint[],
): Set<string> {
  const fresh = new Set<string>();
  if (previous === undefined) return fresh;
  const seen = new Map(previous.map((p) => [p.uid, p.on_frontier]));
  for (const point of next) {
    if (point.on_frontier && seen.get(point.uid) !== true) {
      fresh.add(point.uid);
    }
  }
  return fresh;
}

/** True when two polls returned the same points, so the DOM can be left alone. */
export function samePoints(a: BoardPoint[], b: BoardPoint[]): boolean {
  return JSON.stringify(a) === JSON.stringify(b);
}
