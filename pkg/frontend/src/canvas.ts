// Pointer capture on the drawing canvas with optimistic local echo.

import { normalizeStroke } from "./normalize.js";
import { Point } from "./protocol.js";

export class StrokeCapture {
  private samples: Array<[number, number]> = [];
  private drawing = false;

  constructor(
    private canvas: HTMLCanvasElement,
    private onStroke: (points: Point[]) => void,
  ) {
    canvas.addEventListener("pointerdown", (e) => this.start(e));
    canvas.addEventListener("pointermove", (e) => this.move(e));
    canvas.addEventListener("pointerup", (e) => this.end(e));
    canvas.addEventListener("pointercancel", () => this.cancel());
  }

  private ctx(): CanvasRenderingContext2D {
    return this.canvas.getContext("2d")!;
  }

  private start(e: PointerEvent): void {
    this.drawing = true;
    this.samples = [[e.clientX, e.clientY]];
    this.canvas.setPointerCapture(e.pointerId);
  }

  private move(e: PointerEvent): void {
    if (!this.drawing) return;
    this.samples.push([e.clientX, e.clientY]);
    const ctx = this.ctx();
    const rect = this.canvas.getBoundingClientRect();
    const n = this.samples.length;
    if (n >= 2) {
      // echo the stroke locally before any server ack
      ctx.strokeStyle = "#224";
      ctx.lineWidth = 2.5;
      ctx.lineCap = "round";
      ctx.beginPath();
      ctx.moveTo(this.samples[n - 2][0] - rect.left, this.samples[n - 2][1] - rect.top);
      ctx.lineTo(this.samples[n - 1][0] - rect.left, this.samples[n - 1][1] - rect.top);
      ctx.stroke();
    }
  }

  private end(e: PointerEvent): void {
    if (!this.drawing) return;
    this.drawing = false;
    this.samples.push([e.clientX, e.clientY]);
    const rect = this.canvas.getBoundingClientRect();
    const points = normalizeStroke(this.samples, {
      left: rect.left, top: rect.top, width: rect.width, height: rect.height,
    });
    this.samples = [];
    this.onStroke(points);
  }

  private cancel(): void {
    this.drawing = false;
    this.samples = [];
  }

  clear(): void {
    this.ctx().clearRect(0, 0, this.canvas.width, this.canvas.height);
  }
}
