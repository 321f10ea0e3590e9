import { describe, expect, test } from "vitest";

import { relationsInView, renderDetail } from "../src/detail";
import { board, boardValidated, directionOf, tournament, uidOf } from "./helpers";

const X_DIR = directionOf("latency_s");
const Y_DIR = directionOf("accuracy");

function detail(uid: string, points = board.points): string {
  return renderDetail(uid, points, tournament.space, "latency_s", "accuracy");
}

describe("dominance relations", () => {
  test("dominator lists agree with the service frontier flags", () => {
    for (const point of board.points) {
      const relations = relationsInView(point.uid, board.points, X_DIR, Y_DIR);
      expect(relations.dominators.length === 0).toBe(point.on_frontier);
    }
  });

  test("agreement also holds for the validated-only view", () => {
    for (const point of boardValidated.points) {
      const relations = relationsInView(point.uid, boardValidated.points, X_DIR, Y_DIR);
      expect(relations.dominators.length === 0).toBe(point.on_frontier);
    }
  });

  test("the same uid can be dominated in one view and on the frontier in another", () => {
    // dom-05 is beaten by pending submissions, so it leads the validated board
    const uid = uidOf["dom-05"];
    expect(board.points.find((p) => p.uid === uid)!.on_frontier).toBe(false);
    expect(boardValidated.points.find((p) => p.uid === uid)!.on_frontier).toBe(true);
    expect(relationsInView(uid, board.points, X_DIR, Y_DIR).dominators.length).toBeGreaterThan(0);
    expect(relationsInView(uid, boardValidated.points, X_DIR, Y_DIR).dominators).toEqual([]);
  });

  test("dominance is mutual bookkeeping", () => {
    const front = uidOf["front-1"];
    const dom = uidOf["dom-02"];
    const fromAbove = relationsInView(front, board.points, X_DIR, Y_DIR);
    const fromBelow = relationsInView(dom, board.points, X_DIR, Y_DIR);
    expect(fromAbove.dominated).toContain(dom);
    expect(fromBelow.dominators).toContain(front);
  });

  test("unknown uids have no relations", () => {
    expect(relationsInView("0000000000000000", board.points, X_DIR, Y_DIR)).toEqual({
      dominators: [],
      dominated: [],
    });
  });
});

describe("panel rendering", () => {
  test("a dominated point names every dominator as a clickable uid", () => {
    const uid = uidOf["dom-01"];
    const relations = relationsInView(uid, board.points, X_DIR, Y_DIR);
    expect(relations.dominators.length).toBeGreaterThan(0);
    const html = detail(uid);
    for (const dominator of relations.dominators) {
      expect(html).toContain(`data-uid="${dominator}"`);
    }
    expect(html).toContain("distance to frontier:");
  });

  test("a frontier point reports distance zero and no dominators", () => {
    const html = detail(uidOf["front-1"]);
    expect(html).toContain("on the frontier (distance 0)");
    expect(html).toContain("nothing in this view dominates it");
  });

  test("full metrics and dispersion are listed with units", () => {
    const uid = uidOf["front-2"];
    const point = board.points.find((p) => p.uid === uid)!;
    const html = detail(uid);
    expect(html).toContain("latency_s");
    expect(html).toContain("seconds");
    expect(html).toContain("ratio");
    expect(html).toContain(String(point.metrics.accuracy));
    expect(html).toContain(`min ${point.dispersion.latency_s.min}`);
    expect(html).toContain("iqr 0");
  });

  test("environment and workflow summaries are present", () => {
    const html = detail(uidOf["dom-03"]);
    expect(html).toContain("Linux 6.1");
    expect(html).toContain("mock-cpu-");
    expect(html).toContain("GiB RAM");
    expect(html).toContain("labels: board-");
    expect(html).toContain("5 repetitions");
    expect(html).toMatch(/program fw-/);
    expect(html).toMatch(/model model-/);
  });

  test("status is shown verbatim", () => {
    const pendingUid = board.points.find((p) => p.status === "pending")!.uid;
    expect(detail(pendingUid)).toContain(`<span class="status pending">pending</span>`);
    const validatedUid = board.points.find((p) => p.status === "validated")!.uid;
    expect(detail(validatedUid)).toContain(`<span class="status validated">validated</span>`);
  });

  test("a uid that left the view renders a staleness note, not numbers", () => {
    const html = detail("feedfacefeedface");
    expect(html).toContain("no longer in the current view");
    expect(html).not.toContain("distance");
  });

  test("a point hidden by the pending toggle goes stale in the validated view", () => {
    const pendingUid = uidOf["front-2"];
    expect(detail(pendingUid)).toContain("on the frontier");
    expect(detail(pendingUid, boardValidated.points)).toContain("no longer in the current view");
  });
});
