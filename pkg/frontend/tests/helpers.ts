// Fixtures captured from a real service run: an 18-submission tournament in
// the latency x accuracy plane with four frontier members, of which ten
// submissions were later validated. labels.json maps each uid back to the
// human name it was designed under (front-1..4, dom-01..14).

import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import type { BoardView, TournamentDoc } from "../src/types";

const here = dirname(fileURLToPath(import.meta.url));

export function loadFixture<T>(name: string): T {
  return JSON.parse(readFileSync(join(here, "fixtures", name), "utf8")) as T;
}

export const board = loadFixture<BoardView>("board.json");
export const boardValidated = loadFixture<BoardView>("board_validated.json");
export const tournament = loadFixture<TournamentDoc>("tournament.json");
export const labelOf = loadFixture<Record<string, string>>("labels.json");

export const uidOf: Record<string, string> = Object.fromEntries(
  Object.entries(labelOf).map(([uid, label]) => [label, uid]),
);

export function directionOf(id: string): "minimize" | "maximize" {
  const dim = tournament.space.find((d) => d.id === id);
  if (!dim) throw new Error(`fixture space has no dimension ${id}`);
  return dim.direction;
}
