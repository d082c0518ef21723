import { describe, expect, it } from "vitest";

import { candidateViews, initialState, reduce, stripCells } from "../src/reducer.js";
import { ServerMsg } from "../src/protocol.js";

const candidates = (rev: number, pos: number, probs: number[]): ServerMsg => ({
  t: "candidates",
  rev,
  pos,
  topk: probs.map((p, i) => ({ id: i + 10, p })),
});

describe("reducer", () => {
  it("keeps the highest revision only", () => {
    let s = initialState();
    s = reduce(s, { kind: "server", msg: candidates(3, 0, [0.5, 0.2]) });
    s = reduce(s, { kind: "server", msg: candidates(1, 0, [0.9, 0.05]) });
    expect(s.candidatesRev).toBe(3);
    expect(s.candidates[0].p).toBe(0.5);
  });

  it("accepts equal or newer revisions", () => {
    let s = initialState();
    s = reduce(s, { kind: "server", msg: candidates(1, 0, [0.4]) });
    s = reduce(s, { kind: "server", msg: candidates(2, 0, [0.6]) });
    expect(s.candidates[0].p).toBe(0.6);
  });

  it("tracks optimistic strokes and clears them on commit", () => {
    let s = initialState();
    s = reduce(s, { kind: "local-stroke", points: [[0, 0], [1, 1]] });
    s = reduce(s, { kind: "local-stroke", points: [[0.5, 0.5]] });
    expect(s.pendingStrokes.length).toBe(2);
    s = reduce(s, { kind: "local-commit", symbol: 7 });
    expect(s.pendingStrokes.length).toBe(0);
    expect(s.committed).toEqual([7]);
  });

  it("amend replaces one cell and clears downstream optimistic state", () => {
    let s = initialState();
    s = reduce(s, { kind: "local-commit", symbol: 1 });
    s = reduce(s, { kind: "local-commit", symbol: 2 });
    s = reduce(s, { kind: "local-stroke", points: [[0.1, 0.2]] });
    s = reduce(s, { kind: "local-amend", pos: 0, symbol: 9 });
    expect(s.committed).toEqual([9, 2]);
    expect(s.pendingStrokes.length).toBe(0);
  });

  it("amend out of range is a no-op", () => {
    let s = initialState();
    s = reduce(s, { kind: "local-commit", symbol: 1 });
    const after = reduce(s, { kind: "local-amend", pos: 5, symbol: 2 });
    expect(after.committed).toEqual([1]);
  });

  it("errors land in lastError and candidates clear it", () => {
    let s = initialState();
    s = reduce(s, { kind: "server", msg: { t: "err", code: "CAPACITY", msg: "full" } });
    expect(s.lastError).toContain("CAPACITY");
    s = reduce(s, { kind: "server", msg: candidates(1, 0, [0.4]) });
    expect(s.lastError).toBeNull();
  });
});

describe("view models", () => {
  it("bar widths are relative to the top candidate", () => {
    let s = initialState();
    s = reduce(s, { kind: "server", msg: candidates(1, 0, [0.5, 0.25, 0.1]) });
    const views = candidateViews(s);
    expect(views[0].barWidth).toBe(1);
    expect(views[1].barWidth).toBeCloseTo(0.5);
    expect(views.map((v) => v.hotkey)).toEqual([1, 2, 3]);
  });

  it("strip cells mirror committed symbols", () => {
    let s = initialState();
    s = reduce(s, { kind: "local-commit", symbol: 4 });
    s = reduce(s, { kind: "local-commit", symbol: 6 });
    expect(stripCells(s)).toEqual([
      { pos: 0, symbol: 4 },
      { pos: 1, symbol: 6 },
    ]);
  });
});
