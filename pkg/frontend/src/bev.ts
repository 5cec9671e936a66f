// Bird's-eye-view canvas: renders the viewed frame top-down and hosts the
// box handles (drag to move, click to select). World frame: +x forward
// (screen up), +y left (screen left), sensor at the canvas center.

import { BoxPayload, EditOp } from "./edits.js";
import { FrameView } from "./state.js";

export interface RectLike {
  left: number;
  top: number;
  width: number;
  height: number;
}

// the subset of HTMLCanvasElement the view needs, injectable in tests
export interface CanvasLike {
  width: number;
  height: number;
  addEventListener(type: string, fn: (ev: PointerLike) => void): void;
  getBoundingClientRect(): RectLike;
  getContext(kind: "2d"): CanvasRenderingContext2D | null;
}

export interface PointerLike {
  clientX: number;
  clientY: number;
}

function hullXY(box: BoxPayload): Array<[number, number]> {
  // convex hull (monotone chain) of the 8 corners projected to xy
  const pts: Array<[number, number]> = [];
  for (let i = 0; i < 8; i++) {
    pts.push([box.corners[i * 3], box.corners[i * 3 + 1]]);
  }
  pts.sort((a, b) => (a[0] - b[0]) || (a[1] - b[1]));
  const cross = (o: number[], a: number[], b: number[]) =>
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
  const lower: Array<[number, number]> = [];
  for (const p of pts) {
    while (lower.length >= 2 && cross(lower[lower.length - 2], lower[lower.length - 1], p) <= 0)
      lower.pop();
    lower.push(p);
  }
  const upper: Array<[number, number]> = [];
  for (let i = pts.length - 1; i >= 0; i--) {
    const p = pts[i];
    while (upper.length >= 2 && cross(upper[upper.length - 2], upper[upper.length - 1], p) <= 0)
      upper.pop();
    upper.push(p);
  }
  return lower.slice(0, -1).concat(upper.slice(0, -1));
}

function insideHull(hull: Array<[number, number]>, x: number, y: number): boolean {
  if (hull.length < 3) return false;
  for (let i = 0; i < hull.length; i++) {
    const [ax, ay] = hull[i];
    const [bx, by] = hull[(i + 1) % hull.length];
    if ((bx - ax) * (y - ay) - (by - ay) * (x - ax) < 0) return false;
  }
  return true;
}

export class BevView {
  selectedBox: number | null = null;
  onEdit: ((edit: EditOp) => void) | null = null;
  onSelect: ((index: number | null) => void) | null = null;

  private frame: FrameView | null = null;
  private dragging = false;
  private dragBox = -1;
  private dragStart: [number, number] = [0, 0];
  dragDelta: [number, number] = [0, 0];

  constructor(
    private canvas: CanvasLike,
    public extent = 50,
    private minDragM = 0.05,
  ) {
    canvas.addEventListener("pointerdown", (ev) => this.pointerDown(ev));
    canvas.addEventListener("pointermove", (ev) => this.pointerMove(ev));
    canvas.addEventListener("pointerup", (ev) => this.pointerUp(ev));
  }

  setFrame(frame: FrameView): void {
    this.frame = frame;
    this.selectedBox = null;
    this.dragging = false;
    this.dragDelta = [0, 0];
    this.render();
  }

  private scale(): number {
    return Math.min(this.canvas.width, this.canvas.height) / (2 * this.extent);
  }

  worldFromPixel(px: number, py: number): [number, number] {
    const s = this.scale();
    return [(this.canvas.height / 2 - py) / s, (this.canvas.width / 2 - px) / s];
  }

  pixelFromWorld(x: number, y: number): [number, number] {
    const s = this.scale();
    return [this.canvas.width / 2 - y * s, this.canvas.height / 2 - x * s];
  }

  private eventWorld(ev: PointerLike): [number, number] {
    const rect = this.canvas.getBoundingClientRect();
    const px = ((ev.clientX - rect.left) / rect.width) * this.canvas.width;
    const py = ((ev.clientY - rect.top) / rect.height) * this.canvas.height;
    return this.worldFromPixel(px, py);
  }

  hitTestBox(x: number, y: number): number | null {
    if (this.frame === null) return null;
    for (let i = 0; i < this.frame.boxes.length; i++) {
      if (insideHull(hullXY(this.frame.boxes[i]), x, y)) return i;
    }
    return null;
  }

  private pointerDown(ev: PointerLike): void {
    const [x, y] = this.eventWorld(ev);
    const hit = this.hitTestBox(x, y);
    this.selectedBox = hit;
    this.onSelect?.(hit);
    if (hit !== null) {
      this.dragging = true;
      this.dragBox = hit;
      this.dragStart = [x, y];
      this.dragDelta = [0, 0];
    }
    this.render();
  }

  private pointerMove(ev: PointerLike): void {
    if (!this.dragging) return;
    const [x, y] = this.eventWorld(ev);
    this.dragDelta = [x - this.dragStart[0], y - this.dragStart[1]];
    this.render();
  }

  private pointerUp(ev: PointerLike): void {
    if (!this.dragging) return;
    this.dragging = false;
    const [x, y] = this.eventWorld(ev);
    const dx = x - this.dragStart[0];
    const dy = y - this.dragStart[1];
    this.dragDelta = [0, 0];
    if (Math.hypot(dx, dy) >= this.minDragM) {
      this.onEdit?.({ kind: "move", box_id: this.dragBox, delta: [dx, dy, 0] });
    }
    this.render();
  }

  render(pending: EditOp[] = []): void {
    const ctx = this.canvas.getContext("2d");
    if (ctx === null || this.frame === null) return;
    const { width, height } = this.canvas;
    ctx.fillStyle = "#10141a";
    ctx.fillRect(0, 0, width, height);

    const cloud = this.frame.cloud;
    for (let i = 0; i < cloud.count; i++) {
      const [px, py] = this.pixelFromWorld(cloud.xyz[i * 3], cloud.xyz[i * 3 + 1]);
      if (px < 0 || py < 0 || px >= width || py >= height) continue;
      const v = Math.round(80 + 175 * cloud.intensity[i]);
      ctx.fillStyle = `rgb(${v},${v},${Math.min(255, v + 30)})`;
      ctx.fillRect(px, py, 1.5, 1.5);
    }

    const offsets = new Map<number, [number, number]>();
    for (const e of pending) {
      if (e.kind === "move") {
        const prev = offsets.get(e.box_id) ?? [0, 0];
        offsets.set(e.box_id, [prev[0] + e.delta[0], prev[1] + e.delta[1]]);
      }
    }
    this.frame.boxes.forEach((box, i) => {
      let [ox, oy] = offsets.get(i) ?? [0, 0];
      if (this.dragging && i === this.dragBox) {
        ox += this.dragDelta[0];
        oy += this.dragDelta[1];
      }
      const hull = hullXY(box);
      ctx.strokeStyle = i === this.selectedBox ? "#ffcc33" : "#44dd88";
      ctx.lineWidth = i === this.selectedBox ? 2 : 1;
      ctx.beginPath();
      hull.forEach(([hx, hy], k) => {
        const [px, py] = this.pixelFromWorld(hx + ox, hy + oy);
        if (k === 0) ctx.moveTo(px, py);
        else ctx.lineTo(px, py);
      });
      ctx.closePath();
      ctx.stroke();
    });

    // sensor marker
    const [cx, cy] = this.pixelFromWorld(0, 0);
    ctx.strokeStyle = "#ff5555";
    ctx.strokeRect(cx - 3, cy - 3, 6, 6);
  }
}
