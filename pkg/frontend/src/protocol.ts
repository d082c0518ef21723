// Wire protocol shared with the recognizer service.

export type Point = [number, number];

export interface Candidate {
  id: number;
  p: number;
}

export type ClientMsg =
  | { t: "stroke"; points: Point[] }
  | { t: "commit"; symbol: number | "top1" }
  | { t: "amend"; pos: number; symbol: number };

export type ServerMsg =
  | { t: "candidates"; rev: number; pos: number; topk: Candidate[] }
  | { t: "ack"; rev: number }
  | { t: "err"; code: string; msg: string };

export function parseServerMsg(raw: string): ServerMsg | null {
  let obj: unknown;
  try {
    obj = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof obj !== "object" || obj === null || !("t" in obj)) return null;
  const m = obj as ServerMsg;
  if (m.t === "candidates" || m.t === "ack" || m.t === "err") return m;
  return null;
}
