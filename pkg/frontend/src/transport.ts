// Message channel to the recognizer service.

import { ClientMsg, ServerMsg, parseServerMsg } from "./protocol.js";

export interface Transport {
  send(msg: ClientMsg): void;
  onMessage(handler: (msg: ServerMsg) => void): void;
  close(): void;
}

export class WsTransport implements Transport {
  private ws: WebSocket;
  private handlers: Array<(msg: ServerMsg) => void> = [];

  constructor(url: string) {
    this.ws = new WebSocket(url);
    this.ws.onmessage = (ev) => {
      const msg = parseServerMsg(String(ev.data));
      if (msg) for (const h of this.handlers) h(msg);
    };
  }

  ready(): Promise<void> {
    if (this.ws.readyState === WebSocket.OPEN) return Promise.resolve();
    return new Promise((resolve, reject) => {
      this.ws.addEventListener("open", () => resolve(), { once: true });
      this.ws.addEventListener("error", () => reject(new Error("ws error")), { once: true });
    });
  }

  send(msg: ClientMsg): void {
    this.ws.send(JSON.stringify(msg));
  }

  onMessage(handler: (msg: ServerMsg) => void): void {
    this.handlers.push(handler);
  }

  close(): void {
    this.ws.close();
  }
}
