import { describe, expect, it } from "vitest";

import { BevView } from "../src/bev.js";
import { EditOp } from "../src/edits.js";
import { FrameView } from "../src/state.js";
import { FakeCanvas, boxAt } from "./fakes.js";

function frameWith(boxes: ReturnType<typeof boxAt>[]): FrameView {
  return {
    step: 0,
    cloud: { count: 0, xyz: new Float32Array(0), intensity: new Float32Array(0) },
    boxes,
    raw: {} as FrameView["raw"],
  };
}

describe("BevView geometry", () => {
  it("pixel/world transforms are inverse", () => {
    const view = new BevView(new FakeCanvas());
    const [px, py] = view.pixelFromWorld(12.5, -7.25);
    const [x, y] = view.worldFromPixel(px, py);
    expect(x).toBeCloseTo(12.5, 9);
    expect(y).toBeCloseTo(-7.25, 9);
  });

  it("hit-tests boxes in world coordinates", () => {
    const view = new BevView(new FakeCanvas());
    view.setFrame(frameWith([boxAt(10, 3), boxAt(-5, -8)]));
    expect(view.hitTestBox(10, 3)).toBe(0);
    expect(view.hitTestBox(-5, -8)).toBe(1);
    expect(view.hitTestBox(30, 30)).toBeNull();
  });
});

describe("BevView gestures", () => {
  function pixelEvent(view: BevView, canvas: FakeCanvas, wx: number, wy: number) {
    const [px, py] = view.pixelFromWorld(wx, wy);
    return { clientX: px, clientY: py };
  }

  it("click selects, empty click deselects", () => {
    const canvas = new FakeCanvas();
    const view = new BevView(canvas);
    view.setFrame(frameWith([boxAt(10, 0)]));
    const selections: Array<number | null> = [];
    view.onSelect = (i) => selections.push(i);

    canvas.fire("pointerdown", pixelEvent(view, canvas, 10, 0));
    canvas.fire("pointerup", pixelEvent(view, canvas, 10, 0));
    canvas.fire("pointerdown", pixelEvent(view, canvas, 40, 40));
    expect(selections).toEqual([0, null]);
  });

  it("drag emits a move edit with the world-space delta", () => {
    const canvas = new FakeCanvas();
    const view = new BevView(canvas);
    view.setFrame(frameWith([boxAt(10, 0), boxAt(-20, 5)]));
    const edits: EditOp[] = [];
    view.onEdit = (e) => edits.push(e);

    canvas.fire("pointerdown", pixelEvent(view, canvas, 10, 0));
    canvas.fire("pointermove", pixelEvent(view, canvas, 11, 1.0));
    canvas.fire("pointermove", pixelEvent(view, canvas, 12, 2.5));
    canvas.fire("pointerup", pixelEvent(view, canvas, 12, 2.5));

    expect(edits).toHaveLength(1);
    const edit = edits[0];
    if (edit.kind !== "move") throw new Error("expected move");
    expect(edit.box_id).toBe(0);
    expect(edit.delta[0]).toBeCloseTo(2.0, 6);
    expect(edit.delta[1]).toBeCloseTo(2.5, 6);
    expect(edit.delta[2]).toBe(0);
  });

  it("sub-threshold drags do not emit edits", () => {
    const canvas = new FakeCanvas();
    const view = new BevView(canvas);
    view.setFrame(frameWith([boxAt(10, 0)]));
    const edits: EditOp[] = [];
    view.onEdit = (e) => edits.push(e);
    canvas.fire("pointerdown", pixelEvent(view, canvas, 10, 0));
    canvas.fire("pointerup", pixelEvent(view, canvas, 10.01, 0));
    expect(edits).toHaveLength(0);
  });
});
