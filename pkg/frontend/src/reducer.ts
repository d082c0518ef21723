// Session state reducer.
//
// All server messages funnel through here; displayed candidates always come
// verbatim from the highest-revision candidates message seen so far (stale
// revisions are dropped), so the UI can never show a probability the server
// did not send.

import { Candidate, Point, ServerMsg } from "./protocol.js";

export interface PadState {
  committed: number[];
  /** optimistic strokes of the character being written */
  pendingStrokes: Point[][];
  /** candidates of the highest revision received */
  candidates: Candidate[];
  candidatesRev: number;
  candidatesPos: number;
  lastError: string | null;
}

export function initialState(): PadState {
  return {
    committed: [],
    pendingStrokes: [],
    candidates: [],
    candidatesRev: -1,
    candidatesPos: 0,
    lastError: null,
  };
}

export type PadEvent =
  | { kind: "server"; msg: ServerMsg }
  | { kind: "local-stroke"; points: Point[] }
  | { kind: "local-commit"; symbol: number }
  | { kind: "local-amend"; pos: number; symbol: number };

export function reduce(state: PadState, event: PadEvent): PadState {
  switch (event.kind) {
    case "local-stroke":
      return { ...state, pendingStrokes: [...state.pendingStrokes, event.points] };
    case "local-commit":
      return {
        ...state,
        committed: [...state.committed, event.symbol],
        pendingStrokes: [],
      };
    case "local-amend": {
      if (event.pos < 0 || event.pos >= state.committed.length) return state;
      const committed = [...state.committed];
      committed[event.pos] = event.symbol;
      // downstream optimistic state is no longer meaningful
      return { ...state, committed, pendingStrokes: [] };
    }
    case "server":
      return applyServer(state, event.msg);
  }
}

function applyServer(state: PadState, msg: ServerMsg): PadState {
  switch (msg.t) {
    case "candidates":
      if (msg.rev < state.candidatesRev) return state; // stale revision
      return {
        ...state,
        candidates: msg.topk,
        candidatesRev: msg.rev,
        candidatesPos: msg.pos,
        lastError: null,
      };
    case "ack":
      return state;
    case "err":
      return { ...state, lastError: `${msg.code}: ${msg.msg}` };
  }
}

// ---------------------------------------------------------------------------
// view models (pure projections of state; the DOM layer renders these)
// ---------------------------------------------------------------------------

export interface CandidateView {
  id: number;
  probability: number;
  barWidth: number; // 0..1 relative to the top candidate
  hotkey: number;   // 1..5
}

export function candidateViews(state: PadState): CandidateView[] {
  const top = state.candidates.length ? state.candidates[0].p : 1;
  return state.candidates.map((c, i) => ({
    id: c.id,
    probability: c.p,
    barWidth: top > 0 ? c.p / top : 0,
    hotkey: i + 1,
  }));
}

export interface StripCell {
  pos: number;
  symbol: number;
}

export function stripCells(state: PadState): StripCell[] {
  return state.committed.map((symbol, pos) => ({ pos, symbol }));
}
