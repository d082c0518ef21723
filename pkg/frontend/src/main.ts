// Scribble pad wiring: open a session, stream strokes, render candidates and
// the committed sentence strip.

import { StrokeCapture } from "./canvas.js";
import { AlphabetFile, glyphLookup } from "./glyphs.js";
import { PadState, candidateViews, initialState, reduce, stripCells } from "./reducer.js";
import { Point } from "./protocol.js";
import { WsTransport } from "./transport.js";

const API = (window as any).INKLINE_API ?? "http://127.0.0.1:8077";

async function boot(): Promise<void> {
  const app = document.querySelector<HTMLDivElement>("#app")!;
  app.innerHTML = `
    <h1>inkline scribble pad</h1>
    <div id="strip" class="strip"></div>
    <canvas id="pad" width="320" height="320"></canvas>
    <div id="candidates" class="candidates"></div>
    <div id="status" class="status"></div>`;

  const status = document.getElementById("status")!;
  let glyphs = new Map<number, string>();
  try {
    const alpha = (await (await fetch(`${API.replace(/^ws/, "http")}/alphabet.json`))
      .json()) as AlphabetFile;
    glyphs = glyphLookup(alpha);
  } catch {
    status.textContent = "alphabet.json unavailable; showing symbol ids";
  }

  const resp = await fetch(`${API}/sessions`, {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: "{}",
  });
  const { session } = await resp.json();
  const wsUrl = `${API.replace(/^http/, "ws")}/sessions/${session}/stream`;
  const transport = new WsTransport(wsUrl);
  await transport.ready();

  let state: PadState = initialState();
  const dispatch = (ev: Parameters<typeof reduce>[1]) => {
    state = reduce(state, ev);
    render();
  };
  transport.onMessage((msg) => dispatch({ kind: "server", msg }));

  const canvas = document.getElementById("pad") as HTMLCanvasElement;
  const capture = new StrokeCapture(canvas, (points: Point[]) => {
    dispatch({ kind: "local-stroke", points });
    transport.send({ t: "stroke", points });
  });

  function commit(symbol: number): void {
    dispatch({ kind: "local-commit", symbol });
    transport.send({ t: "commit", symbol });
    capture.clear();
  }

  function amend(pos: number, symbol: number): void {
    dispatch({ kind: "local-amend", pos, symbol });
    transport.send({ t: "amend", pos, symbol });
  }

  document.addEventListener("keydown", (e) => {
    const k = Number(e.key);
    if (k >= 1 && k <= 5 && state.candidates.length >= k) {
      commit(state.candidates[k - 1].id);
    }
  });

  function glyphHtml(symbol: number): string {
    return glyphs.get(symbol) ?? `<span class="sym">#${symbol}</span>`;
  }

  function render(): void {
    const bar = document.getElementById("candidates")!;
    bar.innerHTML = "";
    for (const view of candidateViews(state)) {
      const btn = document.createElement("button");
      btn.className = "candidate";
      btn.innerHTML = `${glyphHtml(view.id)}
        <div class="bar"><div class="fill" style="width:${(view.barWidth * 100).toFixed(0)}%"></div></div>
        <span class="p">${view.probability.toFixed(3)}</span>
        <span class="key">${view.hotkey}</span>`;
      btn.onclick = () => commit(view.id);
      bar.appendChild(btn);
    }
    const strip = document.getElementById("strip")!;
    strip.innerHTML = state.committed.length ? "" : "<em>write something…</em>";
    for (const cell of stripCells(state)) {
      const el = document.createElement("button");
      el.className = "cell";
      el.innerHTML = glyphHtml(cell.symbol);
      el.title = `amend position ${cell.pos}`;
      el.onclick = () => {
        const raw = prompt(`replace symbol at position ${cell.pos} (id)`,
                           String(cell.symbol));
        if (raw !== null) amend(cell.pos, Number(raw));
      };
      strip.appendChild(el);
    }
    status.textContent = state.lastError
      ?? `rev ${state.candidatesRev} · position ${state.candidatesPos}`;
  }

  render();
}

boot();
