// Scripted end-to-end UI loop against the real backend: load a synthetic
// scenario, drag a box and step, delete a box and step, scrub history.

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { SessionApi } from "../src/api.js";
import { BevView } from "../src/bev.js";
import { boxCenter } from "../src/edits.js";
import { SessionController } from "../src/state.js";
import { FakeCanvas } from "./fakes.js";
import { ServiceHandle, launchService } from "./service.js";

let service: ServiceHandle;

beforeAll(async () => {
  service = await launchService();
}, 60_000);

afterAll(() => {
  service?.stop();
});

function controllerWithBev() {
  const controller = new SessionController(new SessionApi(service.url));
  const canvas = new FakeCanvas();
  const bev = new BevView(canvas);
  bev.onEdit = (edit) => controller.stageEdit(edit);
  controller.onChange(() => {
    if (controller.view !== null) bev.setFrame(controller.view);
  });
  return { controller, canvas, bev };
}

function dragBoxTo(bev: BevView, canvas: FakeCanvas, from: [number, number], delta: [number, number]) {
  const start = bev.pixelFromWorld(from[0], from[1]);
  const end = bev.pixelFromWorld(from[0] + delta[0], from[1] + delta[1]);
  canvas.fire("pointerdown", { clientX: start[0], clientY: start[1] });
  canvas.fire("pointermove", { clientX: (start[0] + end[0]) / 2, clientY: (start[1] + end[1]) / 2 });
  canvas.fire("pointermove", { clientX: end[0], clientY: end[1] });
  canvas.fire("pointerup", { clientX: end[0], clientY: end[1] });
}

describe("interactive rollout loop", () => {
  it("loads frame 0 with visible points", async () => {
    const { controller } = controllerWithBev();
    const frame0 = await controller.load({ scenario: "demo", generator: "sde", seed: 0 });
    expect(controller.currentStep).toBe(0);
    expect(frame0.cloud.count).toBeGreaterThan(0);
    expect(frame0.boxes.length).toBeGreaterThan(0);
  }, 60_000);

  it("drag moves a box and the next frame reflects it", async () => {
    const { controller, canvas, bev } = controllerWithBev();
    const frame0 = await controller.load({ scenario: "demo", generator: "sde", seed: 1 });
    const target = 0;
    const before = boxCenter(frame0.boxes[target]);

    dragBoxTo(bev, canvas, [before[0], before[1]], [2, 3]);
    expect(controller.pendingEdits).toHaveLength(1);

    // the same box id in the reference (un-edited) next frame, for the delta
    const reference = new SessionController(new SessionApi(service.url));
    await reference.load({ scenario: "demo", generator: "sde", seed: 1 });
    const plain = await reference.step();

    const edited = await controller.step();
    expect(controller.pendingEdits).toHaveLength(0); // cleared after a step
    const movedCenter = boxCenter(edited.boxes[target]);
    const plainCenter = boxCenter(plain.boxes[target]);
    expect(movedCenter[0] - plainCenter[0]).toBeCloseTo(2, 4);
    expect(movedCenter[1] - plainCenter[1]).toBeCloseTo(3, 4);
  }, 60_000);

  it("delete removes the box from downstream frames", async () => {
    const { controller } = controllerWithBev();
    const frame0 = await controller.load({ scenario: "demo", generator: "sde", seed: 2 });
    const n = frame0.boxes.length;
    controller.stageEdit({ kind: "remove", box_id: 0 });
    const next = await controller.step();
    expect(next.boxes.length).toBe(n - 1);
  }, 60_000);

  it("scrubbing renders immutable history", async () => {
    const { controller } = controllerWithBev();
    await controller.load({ scenario: "demo", generator: "sde", seed: 3 });
    await controller.step();
    await controller.step();

    const first = await controller.scrub(1);
    expect(controller.viewedStep).toBe(1);
    await controller.scrub(2);
    const again = await controller.scrub(1);
    expect(again).toBe(first); // cache returns the identical frozen object
    expect(Object.isFrozen(again)).toBe(true);

    // and the service replays identical bytes for stored frames
    const a = await controller.api.frame(controller.id!, 1);
    const b = await controller.api.frame(controller.id!, 1);
    expect(a.cloud_b64).toBe(b.cloud_b64);
    expect(a.range_image_b64).toBe(b.range_image_b64);
  }, 60_000);

  it("honors the single-in-flight step contract", async () => {
    const { controller } = controllerWithBev();
    await controller.load({ scenario: "demo", generator: "sde", seed: 4 });
    const p1 = controller.step();
    await expect(controller.step()).rejects.toThrow(/in flight/);
    await p1;
  }, 60_000);

  it("surfaces service errors", async () => {
    const api = new SessionApi(service.url);
    await expect(api.create({ scenario: "missing" })).rejects.toThrow(/422/);
  });
});
