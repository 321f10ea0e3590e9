import type { BoardState } from "./state";
import type { BoardView, ErrorBody, TournamentDoc } from "./types";

/** Narrow fetch signature so tests can inject a fake. */
export type FetchLike = (
  url: string,
  init?: { signal?: AbortSignal },
) => Promise<Response>;

export class ApiError extends Error {
  readonly status: number;
  readonly code: string;
  readonly field?: string;

  constructor(status: number, body: ErrorBody) {
    super(body.message);
    this.status = status;
    this.code = body.code;
    this.field = body.field;
  }
}

function isAbort(err: unknown): boolean {
  return typeof err === "object" && err !== null && (err as { name?: string }).name === "AbortError";
}

/** Relative board path for one pending variant of the current view. */
export function boardPath(state: BoardState, includePending: boolean): string {
  const params = new URLSearchParams();
  params.set("x", state.dimX);
  params.set("y", state.dimY);
  params.set("pending", includePending ? "true" : "false");
  for (const key of Object.keys(state.filters).sort()) {
    params.append("label", `${key}:${state.filters[key]}`);
  }
  return `/v1/tournaments/${state.tournamentUid}/board?${params.toString()}`;
}

async function getJson(fetchImpl: FetchLike, url: string, signal?: AbortSignal): Promise<unknown> {
  let response: Response;
  try {
    response = await fetchImpl(url, { signal });
  } catch (err) {
    if (isAbort(err)) throw err;
    throw new ApiError(0, { code: "unreachable", message: `cannot reach ${url}: ${String(err)}` });
  }
  if (!response.ok) {
    let body: ErrorBody;
    try {
      body = (await response.json()) as ErrorBody;
    } catch {
      body = { code: "http_error", message: `request failed with status ${response.status}` };
    }
    throw new ApiError(response.status, body);
  }
  return response.json();
}

/**
 * Both pending variants of one view, fetched together. Keeping the pair
 * around lets the pending toggle swap instantly between service-judged
 * boards instead of refetching or recomputing frontier flags locally.
 */
export interface BoardPair {
  all: BoardView;
  validated: BoardView;
}

export async function fetchBoardPair(
  base: string,
  state: BoardState,
  fetchImpl: FetchLike,
  signal?: AbortSignal,
): Promise<BoardPair> {
  const [all, validated] = await Promise.all([
    getJson(fetchImpl, base + boardPath(state, true), signal),
    getJson(fetchImpl, base + boardPath(state, false), signal),
  ]);
  return { all: all as BoardView, validated: validated as BoardView };
}

export async function fetchTournament(
  base: string,
  uid: string,
  fetchImpl: FetchLike,
  signal?: AbortSignal,
): Promise<TournamentDoc> {
  const doc = await getJson(fetchImpl, `${base}/v1/tournaments/${uid}`, signal);
  return doc as TournamentDoc;
}
