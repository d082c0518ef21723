// Scripted end-to-end loop against a mock server that mimics the service
// protocol (including a deliberately stale revision): draw three strokes,
// commit top-1 twice, amend position 0, and check at every step that the
// candidate display reflects the highest server revision and never shows a
// probability the server did not send.

import { describe, expect, it } from "vitest";

import { Candidate, ClientMsg, Point, ServerMsg } from "../src/protocol.js";
import { PadState, candidateViews, initialState, reduce } from "../src/reducer.js";

class MockServer {
  rev = 0;
  pos = 0;
  history: number[] = [];
  strokesInBuffer = 0;
  sent: ServerMsg[] = [];
  /** every (id, p) pair ever emitted, for the fabrication check */
  emitted = new Set<string>();

  private top5(seed: number): Candidate[] {
    const ids = [0, 1, 2, 3, 4].map((i) => (i * 7 + seed) % 9);
    let mass = 0.55;
    return ids.map((id, i) => {
      const p = Number((mass / (i + 1)).toFixed(6));
      mass *= 0.6;
      return { id, p };
    });
  }

  private emit(msg: ServerMsg): ServerMsg {
    this.sent.push(msg);
    if (msg.t === "candidates") {
      for (const c of msg.topk) this.emitted.add(`${c.id}:${c.p}`);
    }
    return msg;
  }

  connect(): ServerMsg[] {
    return [this.emit({ t: "candidates", rev: this.rev, pos: this.pos,
                        topk: this.top5(0) })];
  }

  handle(msg: ClientMsg): ServerMsg[] {
    if (msg.t === "stroke") {
      this.strokesInBuffer += 1;
      this.rev += 1;
      const fresh = this.emit({ t: "candidates", rev: this.rev, pos: this.pos,
                                topk: this.top5(this.rev) });
      if (this.strokesInBuffer === 2) {
        // out-of-order duplicate of an older revision: the UI must drop it
        const stale = this.emit({ t: "candidates", rev: this.rev - 1,
                                  pos: this.pos, topk: this.top5(99) });
        return [fresh, stale];
      }
      return [fresh];
    }
    if (msg.t === "commit") {
      const symbol = msg.symbol === "top1"
        ? (this.sent.filter((m) => m.t === "candidates").pop() as any).topk[0].id
        : msg.symbol;
      this.history.push(symbol);
      this.strokesInBuffer = 0;
      this.pos = this.history.length;
      this.rev += 1;
      return [
        this.emit({ t: "ack", rev: this.rev }),
        this.emit({ t: "candidates", rev: this.rev, pos: this.pos,
                    topk: this.top5(this.rev) }),
      ];
    }
    // amend
    this.history[msg.pos] = msg.symbol;
    this.rev += 1;
    return [
      this.emit({ t: "ack", rev: this.rev }),
      this.emit({ t: "candidates", rev: this.rev, pos: this.pos,
                  topk: this.top5(this.rev) }),
    ];
  }
}

describe("scripted UI loop", () => {
  it("three strokes, two top-1 commits, amend position 0", () => {
    const server = new MockServer();
    let state: PadState = initialState();
    let maxRevSeen = -1;

    const applyServer = (replies: ServerMsg[]) => {
      for (const msg of replies) {
        if (msg.t === "candidates") maxRevSeen = Math.max(maxRevSeen, msg.rev);
        state = reduce(state, { kind: "server", msg });
        checkInvariants();
      }
    };
    const checkInvariants = () => {
      // display reflects the highest revision received so far
      expect(state.candidatesRev).toBe(maxRevSeen);
      // every displayed probability came from a server message
      for (const view of candidateViews(state)) {
        expect(server.emitted.has(`${view.id}:${view.probability}`)).toBe(true);
      }
    };
    const send = (msg: ClientMsg) => applyServer(server.handle(msg));

    applyServer(server.connect());

    const strokes: Point[][] = [
      [[0.1, 0.1], [0.9, 0.1]],
      [[0.5, 0.0], [0.5, 1.0]],
      [[0.0, 0.8], [1.0, 0.8]],
    ];
    for (const points of strokes) {
      state = reduce(state, { kind: "local-stroke", points });
      send({ t: "stroke", points });
    }
    expect(state.pendingStrokes.length).toBe(3);

    // commit top-1 twice
    for (let i = 0; i < 2; i++) {
      const top1 = state.candidates[0].id;
      state = reduce(state, { kind: "local-commit", symbol: top1 });
      send({ t: "commit", symbol: "top1" });
      expect(server.history[i]).toBe(top1);
    }
    expect(state.committed.length).toBe(2);

    // amend position 0
    const replacement = 8;
    state = reduce(state, { kind: "local-amend", pos: 0, symbol: replacement });
    send({ t: "amend", pos: 0, symbol: replacement });
    expect(server.history[0]).toBe(replacement);
    expect(state.committed[0]).toBe(replacement);

    // final display still coherent
    expect(state.candidatesRev).toBe(server.rev);
    expect(candidateViews(state).length).toBe(5);
  });
});
