// Page wiring: session controls, BEV editing surface, 3D view, scrubber.

import { SessionApi } from "./api.js";
import { BevView } from "./bev.js";
import { boxCenter } from "./edits.js";
import { PointsView } from "./points3d.js";
import { SessionController } from "./state.js";

function $(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (el === null) throw new Error(`missing #${id}`);
  return el;
}

const params = new URLSearchParams(window.location.search);
const apiBase = params.get("api") ?? "http://127.0.0.1:8323";
const scenario = params.get("scenario") ?? "demo";
const generator = (params.get("generator") ?? "sde") as "sde" | "diffusion";

const api = new SessionApi(apiBase);
const controller = new SessionController(api);
const canvas = $("bev") as HTMLCanvasElement;
const bev = new BevView(canvas);
const points3d = new PointsView($("view3d"));

const status = $("status");
const stepBtn = $("step") as HTMLButtonElement;
const deleteBtn = $("delete-box") as HTMLButtonElement;
const addBtn = $("add-box") as HTMLButtonElement;
const clearBtn = $("clear-edits") as HTMLButtonElement;
const scrubber = $("scrub") as HTMLInputElement;

bev.onEdit = (edit) => controller.stageEdit(edit);

deleteBtn.addEventListener("click", () => {
  if (bev.selectedBox !== null) {
    controller.stageEdit({ kind: "remove", box_id: bev.selectedBox });
    bev.selectedBox = null;
  }
});

addBtn.addEventListener("click", () => {
  // axis-aligned 4.5 x 2 x 1.8 box ten meters ahead
  const cs: number[] = [];
  for (const sz of [0, 1.8]) {
    for (const [sx, sy] of [[-2.25, -1], [2.25, -1], [2.25, 1], [-2.25, 1]]) {
      cs.push(10 + sx, sy, sz);
    }
  }
  controller.stageEdit({ kind: "add", box: { category: 0, corners: cs } });
});

clearBtn.addEventListener("click", () => controller.clearPending());

stepBtn.addEventListener("click", async () => {
  try {
    await controller.step();
  } catch {
    // surfaced via controller.lastError
  }
});

scrubber.addEventListener("input", async () => {
  await controller.scrub(Number(scrubber.value));
});

controller.onChange(() => {
  stepBtn.disabled = controller.busy || controller.currentStep >= controller.horizon;
  scrubber.max = String(controller.currentStep);
  scrubber.value = String(controller.viewedStep);
  const view = controller.view;
  if (view !== null) {
    bev.setFrame(view);
    bev.render(controller.pendingEdits);
    if (points3d.enabled) points3d.setFrame(view);
  }
  const edits = controller.pendingEdits
    .map((e) =>
      e.kind === "move"
        ? `move #${e.box_id} by (${e.delta.map((v) => v.toFixed(1)).join(", ")})`
        : e.kind === "remove"
          ? `remove #${e.box_id}`
          : `add @ (${boxCenter(e.box).map((v) => v.toFixed(1)).join(", ")})`,
    )
    .join("; ");
  status.textContent = controller.lastError
    ? `error: ${controller.lastError}`
    : `step ${controller.viewedStep}/${controller.horizon}` +
      (controller.busy ? " (stepping...)" : "") +
      (edits ? ` | pending: ${edits}` : "");
});

(async () => {
  try {
    await api.health();
    await controller.load({ scenario, generator, seed: 0 });
  } catch (err) {
    status.textContent = `service unreachable at ${apiBase}: ${err instanceof Error ? err.message : err}`;
    status.classList.add("error");
  }
})();
