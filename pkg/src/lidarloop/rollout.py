"""Frame-by-frame autoregressive inference with interactive box edits.

A session owns the loop state: the last generated frame, per-step applied
box lists, the edit log, and the seed. Step s consumes only the frame
generated at s-1 (asserted for s >= 2), the scenario's conditions for s,
and any edits, so replay with the same seed is byte-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from lidarloop.generator.context import build_context
from lidarloop.generator.pipeline import Generator
from lidarloop.rangeview import BeamTable, RangeImage, project, unproject
from lidarloop.scenemodel import BBox, FrameRecord, PointCloud


@dataclass(frozen=True)
class EditOp:
    """One box edit applied to the current step before context construction."""

    kind: str                      # "move" | "remove" | "add"
    box_id: int | None = None
    delta: np.ndarray | None = None
    box: BBox | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("move", "remove", "add"):
            raise ValueError(f"unknown edit kind {self.kind!r}")
        if self.kind in ("move", "remove") and self.box_id is None:
            raise ValueError(f"{self.kind} edit needs box_id")
        if self.kind == "move":
            d = np.asarray(self.delta, dtype=np.float64).reshape(3)
            if not np.isfinite(d).all():
                raise ValueError("move delta must be finite")
            object.__setattr__(self, "delta", d)
        if self.kind == "add" and self.box is None:
            raise ValueError("add edit needs a box")

    @classmethod
    def move(cls, box_id: int, delta) -> "EditOp":
        return cls("move", box_id=box_id, delta=np.asarray(delta, dtype=np.float64))

    @classmethod
    def remove(cls, box_id: int) -> "EditOp":
        return cls("remove", box_id=box_id)

    @classmethod
    def add(cls, box: BBox) -> "EditOp":
        return cls("add", box=box)


def apply_edits(boxes: Sequence[BBox], edits: Sequence[EditOp]) -> tuple[BBox, ...]:
    """Apply edits in order against the evolving list (indices shift)."""
    out = list(boxes)
    for edit in edits:
        if edit.kind in ("move", "remove"):
            if not 0 <= edit.box_id < len(out):
                raise ValueError(
                    f"edit references box {edit.box_id}, only {len(out)} present"
                )
        if edit.kind == "move":
            out[edit.box_id] = out[edit.box_id].translated(edit.delta)
        elif edit.kind == "remove":
            out.pop(edit.box_id)
        else:
            out.append(edit.box)
    return tuple(out)


def _step_seed(seed: int, step: int) -> int:
    return (seed * 1_000_003 + step * 7_919) % (2**31 - 1)


@dataclass
class Session:
    """Single-writer rollout state machine; not reentrant per session."""

    scenario: tuple[FrameRecord, ...]
    generator: Generator
    seed: int
    beams: BeamTable
    width: int
    r_max: float
    categories: int
    mask_step_m: float = 0.2

    step_index: int = 0
    last_image: RangeImage = field(init=False)
    last_cloud: PointCloud = field(init=False)
    applied_boxes: list[tuple[BBox, ...]] = field(default_factory=list)
    edit_log: list[tuple[EditOp, ...]] = field(default_factory=list)
    provenance: list[str] = field(default_factory=list)
    frames: list[FrameRecord] = field(default_factory=list)
    _last_source: str = "input"

    @property
    def horizon(self) -> int:
        return len(self.scenario) - 1


def init_session(
    frame0: FrameRecord,
    scenario: Sequence[FrameRecord],
    generator: Generator,
    seed: int,
    beams: BeamTable,
    width: int,
    r_max: float = 80.0,
    categories: int = 3,
    mask_step_m: float = 0.2,
) -> Session:
    """Start a session at step 0 with the projection of the input frame."""
    scenario = tuple(scenario)
    if len(scenario) < 1:
        raise ValueError("scenario must contain at least the first frame")
    if len(frame0.cloud) == 0:
        raise ValueError("first frame cloud is empty")
    ref = scenario[0]
    if ref.scene_token != frame0.scene_token or ref.timestamp != frame0.timestamp:
        raise ValueError("frame0 does not match scenario[0]")
    session = Session(
        scenario=scenario,
        generator=generator,
        seed=seed,
        beams=beams,
        width=width,
        r_max=r_max,
        categories=categories,
        mask_step_m=mask_step_m,
    )
    session.last_image = project(frame0.cloud, beams, width, r_max)
    session.last_cloud = unproject(session.last_image, beams)
    session.applied_boxes.append(tuple(frame0.boxes))
    session.edit_log.append(())
    session.provenance.append("input")
    session.frames.append(frame0)
    return session


def step(session: Session, edits: Sequence[EditOp] = ()) -> FrameRecord:
    """Generate the next frame, feeding back the last generated one."""
    s = session.step_index + 1
    if s > session.horizon:
        raise ValueError(f"scenario exhausted at step {session.step_index}")
    cond = session.scenario[s]
    boxes = apply_edits(cond.boxes, edits)

    # autoregression purity: from step 2 on, only generated frames feed back
    if s >= 2 and session._last_source != "generated":
        raise AssertionError("autoregression purity violated: non-generated input")

    ctx = build_context(
        session.last_cloud,
        session.applied_boxes[session.step_index],
        session.scenario[session.step_index].ego,
        boxes,
        cond.ego,
        session.beams,
        session.width,
        session.r_max,
        session.categories,
        session.mask_step_m,
    )
    img = session.generator.generate(ctx, _step_seed(session.seed, s))
    cloud = unproject(img, session.beams)

    session.last_image = img
    session.last_cloud = cloud
    session._last_source = "generated"
    session.step_index = s
    session.applied_boxes.append(boxes)
    session.edit_log.append(tuple(edits))
    session.provenance.append("generated")
    out = FrameRecord(
        timestamp=cond.timestamp,
        cloud=cloud,
        boxes=boxes,
        ego=cond.ego,
        scene_token=cond.scene_token,
    )
    session.frames.append(out)
    return out


def run(session: Session, steps: int) -> list[FrameRecord]:
    """Run a fresh session forward without edits; returns generated frames."""
    if session.step_index != 0:
        raise ValueError("run() needs a fresh session")
    return [step(session) for _ in range(steps)]
