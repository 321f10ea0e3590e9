// Browser entry point. Everything that touches the DOM lives here; the
// modules it calls are pure and covered by the node test suite.

import { ApiError, fetchBoardPair, fetchTournament } from "./api";
import type { BoardPair, FetchLike } from "./api";
import { renderDetail } from "./detail";
import { renderScatter } from "./scatter";
import {
  decodeState,
  encodeState,
  freshFrontierUids,
  nextBackoffS,
  withAxes,
  withFilter,
  withoutFilter,
  withPending,
  withPollInterval,
  StateError,
} from "./state";
import type { BoardState } from "./state";
import type { BoardPoint, MetricDimension } from "./types";

function byId<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

class ScoreboardApp {
  private state: BoardState;
  private space: MetricDimension[] = [];
  private pair?: BoardPair;
  private inflight?: AbortController;
  private timer?: ReturnType<typeof setTimeout>;
  private delayS: number;
  private lastSvg = "";
  private fresh = new Set<string>();
  private selected?: string;
  private readonly fetchImpl: FetchLike = (url, init) => window.fetch(url, init);

  constructor(private readonly base = "") {
    this.state = decodeState(window.location.search);
    this.delayS = this.state.pollIntervalS;
  }

  async start(): Promise<void> {
    if (!this.state.tournamentUid) {
      this.banner("open this page with ?t=<tournament uid> to pick a tournament");
      return;
    }
    try {
      const tournament = await fetchTournament(this.base, this.state.tournamentUid, this.fetchImpl);
      this.space = tournament.space;
      byId<HTMLHeadingElement>("title").textContent =
        `${tournament.title} [${tournament.status}]`;
    } catch (err) {
      this.banner(this.describe(err));
      return;
    }
    // the URL may name axes this tournament does not have
    const ids = new Set(this.space.map((d) => d.id));
    if (!ids.has(this.state.dimX) || !ids.has(this.state.dimY)) {
      this.state = withAxes(this.state, this.space[0].id, this.space[1].id);
    }
    this.wireControls();
    this.syncControls();
    void this.poll();
  }

  private wireControls(): void {
    const axisX = byId<HTMLSelectElement>("axis-x");
    const axisY = byId<HTMLSelectElement>("axis-y");
    for (const select of [axisX, axisY]) {
      select.innerHTML = this.space
        .map((d) => `<option value="${d.id}">${d.id} (${d.unit})</option>`)
        .join("");
      select.addEventListener("change", () => {
        this.applyState(() => withAxes(this.state, axisX.value, axisY.value), true);
      });
    }

    byId<HTMLInputElement>("show-pending").addEventListener("change", (event) => {
      const checked = (event.target as HTMLInputElement).checked;
      // cached pair already holds both variants, no fetch needed
      this.applyState(() => withPending(this.state, checked), false);
    });

    byId<HTMLInputElement>("poll-seconds").addEventListener("change", (event) => {
      const seconds = Number((event.target as HTMLInputElement).value);
      this.applyState(() => withPollInterval(this.state, seconds), false);
      this.delayS = this.state.pollIntervalS;
    });

    byId<HTMLButtonElement>("add-filter").addEventListener("click", () => {
      const key = byId<HTMLInputElement>("filter-key").value.trim();
      const value = byId<HTMLInputElement>("filter-value").value.trim();
      const changed = this.applyState(() => withFilter(this.state, key, value), true);
      if (changed) {
        byId<HTMLInputElement>("filter-key").value = "";
        byId<HTMLInputElement>("filter-value").value = "";
      }
    });

    byId<HTMLDivElement>("filter-chips").addEventListener("click", (event) => {
      const target = (event.target as HTMLElement).closest("[data-filter-key]");
      if (!target) return;
      const key = target.getAttribute("data-filter-key") ?? "";
      this.applyState(() => withoutFilter(this.state, key), true);
    });

    byId<HTMLButtonElement>("banner-dismiss").addEventListener("click", () => {
      byId<HTMLDivElement>("banner").hidden = true;
    });

    const selectPoint = (event: Event): void => {
      const target = (event.target as HTMLElement).closest("[data-uid]");
      if (!target) return;
      event.preventDefault();
      this.selected = target.getAttribute("data-uid") ?? undefined;
      this.renderDetailPanel();
    };
    byId<HTMLDivElement>("board").addEventListener("click", selectPoint);
    byId<HTMLElement>("detail").addEventListener("click", selectPoint);
  }

  /** Run a state transition; on rejection show a banner and keep the old view. */
  private applyState(transition: () => BoardState, refetch: boolean): boolean {
    let next: BoardState;
    try {
      next = transition();
    } catch (err) {
      if (err instanceof StateError) {
        this.banner(err.message);
        this.syncControls();
        return false;
      }
      throw err;
    }
    this.state = next;
    window.history.replaceState(null, "", `?${encodeState(this.state)}`);
    this.syncControls();
    if (refetch) {
      void this.poll();
    } else {
      this.renderBoard();
    }
    return true;
  }

  private syncControls(): void {
    byId<HTMLSelectElement>("axis-x").value = this.state.dimX;
    byId<HTMLSelectElement>("axis-y").value = this.state.dimY;
    byId<HTMLInputElement>("show-pending").checked = this.state.showPending;
    byId<HTMLInputElement>("poll-seconds").value = String(this.state.pollIntervalS);
    const chips = Object.keys(this.state.filters)
      .sort()
      .map(
        (key) =>
          `<span class="chip">${key}:${this.state.filters[key]} ` +
          `<button data-filter-key="${key}" title="remove">x</button></span>`,
      );
    byId<HTMLDivElement>("filter-chips").innerHTML = chips.join("");
  }

  private shownPoints(): BoardPoint[] {
    if (!this.pair) return [];
    return this.state.showPending ? this.pair.all.points : this.pair.validated.points;
  }

  private async poll(): Promise<void> {
    if (this.timer !== undefined) clearTimeout(this.timer);
    this.inflight?.abort();
    const controller = new AbortController();
    this.inflight = controller;
    try {
      const pair = await fetchBoardPair(this.base, this.state, this.fetchImpl, controller.signal);
      if (controller.signal.aborted) return;
      const before = this.pair ? this.shownPoints() : undefined;
      this.pair = pair;
      this.fresh = freshFrontierUids(before, this.shownPoints());
      this.delayS = this.state.pollIntervalS;
      byId<HTMLDivElement>("banner").hidden = true;
      this.renderBoard();
    } catch (err) {
      if (controller.signal.aborted) return;
      this.delayS = nextBackoffS(this.delayS);
      this.banner(`${this.describe(err)}; retrying in ${this.delayS}s`);
    } finally {
      if (!controller.signal.aborted) {
        this.timer = setTimeout(() => void this.poll(), this.delayS * 1000);
      }
    }
  }

  private renderBoard(): void {
    const svg = renderScatter(this.shownPoints(), this.space, this.state.dimX, this.state.dimY, {
      fresh: this.fresh,
    });
    if (svg !== this.lastSvg) {
      byId<HTMLDivElement>("board").innerHTML = svg;
      this.lastSvg = svg;
    }
    this.renderDetailPanel();
  }

  private renderDetailPanel(): void {
    const panel = byId<HTMLElement>("detail");
    if (!this.selected) {
      panel.innerHTML = `<p class="none">select a point to inspect it</p>`;
      return;
    }
    panel.innerHTML = renderDetail(
      this.selected,
      this.shownPoints(),
      this.space,
      this.state.dimX,
      this.state.dimY,
    );
  }

  private banner(message: string): void {
    byId<HTMLDivElement>("banner").hidden = false;
    byId<HTMLSpanElement>("banner-text").textContent = message;
  }

  private describe(err: unknown): string {
    if (err instanceof ApiError) {
      return err.status === 0 ? err.message : `${err.code}: ${err.message}`;
    }
    return String(err);
  }
}

window.addEventListener("DOMContentLoaded", () => {
  void new ScoreboardApp().start();
});
