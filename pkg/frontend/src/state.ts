// Session view-state: frame cache, pending edits, stepping and scrubbing.
// Frames are never mutated locally; every scene change round-trips through
// the service, and fetched frames are cached immutably by step index.

import { CreateRequest, FramePayload, SessionApi } from "./api.js";
import { CloudData, b64ToBytes, parseCloud } from "./decode.js";
import { BoxPayload, EditOp } from "./edits.js";

export interface FrameView {
  step: number;
  cloud: CloudData;
  boxes: BoxPayload[];
  raw: FramePayload;
}

export type Listener = () => void;

export class SessionController {
  id: string | null = null;
  horizon = 0;
  currentStep = 0;
  viewedStep = 0;
  pendingEdits: EditOp[] = [];
  busy = false;
  lastError: string | null = null;

  private frames = new Map<number, FrameView>();
  private listeners: Listener[] = [];

  constructor(public api: SessionApi) {}

  onChange(fn: Listener): void {
    this.listeners.push(fn);
  }

  private emit(): void {
    for (const fn of this.listeners) fn();
  }

  private cache(payload: FramePayload): FrameView {
    const view: FrameView = {
      step: payload.step,
      cloud: parseCloud(b64ToBytes(payload.cloud_b64)),
      boxes: payload.boxes,
      raw: payload,
    };
    Object.freeze(view);
    this.frames.set(payload.step, view);
    return view;
  }

  get view(): FrameView | null {
    return this.frames.get(this.viewedStep) ?? null;
  }

  async load(req: CreateRequest): Promise<FrameView> {
    this.lastError = null;
    const created = await this.api.create(req);
    this.id = created.id;
    this.horizon = created.horizon;
    this.currentStep = created.step;
    const frame0 = await this.api.frame(created.id, 0);
    const view = this.cache(frame0);
    this.viewedStep = 0;
    this.emit();
    return view;
  }

  async attach(id: string): Promise<FrameView> {
    // re-attach to an existing session: walk stored frames forward
    this.id = id;
    let k = 0;
    let last: FrameView | null = null;
    for (;;) {
      try {
        last = this.cache(await this.api.frame(id, k));
        k += 1;
      } catch {
        break;
      }
    }
    if (last === null) throw new Error(`session ${id} has no frames`);
    this.currentStep = last.step;
    this.viewedStep = last.step;
    this.emit();
    return last;
  }

  stageEdit(edit: EditOp): void {
    this.pendingEdits.push(edit);
    this.emit();
  }

  clearPending(): void {
    this.pendingEdits = [];
    this.emit();
  }

  /** One step in flight at a time; the service's 409 is honored locally. */
  async step(): Promise<FrameView> {
    if (this.id === null) throw new Error("no session loaded");
    if (this.busy) throw new Error("a step is already in flight");
    this.busy = true;
    this.lastError = null;
    this.emit();
    try {
      const payload = await this.api.step(this.id, this.pendingEdits);
      const view = this.cache(payload);
      this.currentStep = payload.step;
      this.viewedStep = payload.step;
      this.pendingEdits = [];
      return view;
    } catch (err) {
      this.lastError = err instanceof Error ? err.message : String(err);
      throw err;
    } finally {
      this.busy = false;
      this.emit();
    }
  }

  /** Render a historical frame; cached frames are returned as-is. */
  async scrub(k: number): Promise<FrameView> {
    if (this.id === null) throw new Error("no session loaded");
    let view = this.frames.get(k);
    if (view === undefined) {
      view = this.cache(await this.api.frame(this.id, k));
    }
    this.viewedStep = k;
    this.emit();
    return view;
  }
}
