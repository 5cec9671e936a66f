"""Session-oriented HTTP API exposing interactive rollout to clients.

Sessions live in memory, one single-writer rollout each: concurrent steps
on a session serialize (the loser gets 409). Point clouds travel as base64
LGPC blobs, range images as base64 LGRI blobs; stored frames are serialized
once at generation time so replays return identical bytes.
"""

from __future__ import annotations

import base64
import io
import json
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from lidarloop import benchkit
from lidarloop.generator import (
    DiffusionGenerator,
    GeneratorConfig,
    GeneratorModel,
    SdeBaselineGenerator,
    load_model,
)
from lidarloop.rangeview import BeamTable, write_range_image
from lidarloop.rollout import EditOp, Session, init_session, step
from lidarloop.scenemodel import BBox, EgoState, FrameRecord, Pose


# -- wire schemas -----------------------------------------------------------


class BoxPayload(BaseModel):
    category: int
    corners: list[float] = Field(min_length=24, max_length=24)


class EgoPayload(BaseModel):
    speed: float = 0.0
    acceleration: float = 0.0
    steering_angle: float = 0.0
    ego2glb: list[float] = Field(min_length=16, max_length=16)
    li2ego: list[float] = Field(min_length=16, max_length=16)


class FramePayload(BaseModel):
    timestamp: float
    scene_token: str = "inline"
    cloud_b64: Optional[str] = None  # required for frame 0
    boxes: list[BoxPayload] = []
    ego: EgoPayload


class BeamsPayload(BaseModel):
    heights: list[float]
    elevations: list[float]


class InlineScenario(BaseModel):
    frames: list[FramePayload]
    beams: BeamsPayload
    width: int
    r_max: float = 80.0


class CreateSessionRequest(BaseModel):
    scenario: Optional[str] = None        # name under the configured dir
    inline: Optional[InlineScenario] = None
    generator: Literal["sde", "diffusion"] = "sde"
    seed: int = 0


class EditPayload(BaseModel):
    kind: Literal["move", "remove", "add"]
    box_id: Optional[int] = None
    delta: Optional[list[float]] = None
    box: Optional[BoxPayload] = None


class StepRequest(BaseModel):
    edits: list[EditPayload] = []


# -- server state -----------------------------------------------------------


@dataclass
class ServiceConfig:
    scenario_dir: Optional[Path] = None
    session_ttl_s: float = 3600.0
    checkpoint: Optional[Path] = None


@dataclass
class SessionEntry:
    session: Session
    generator_kind: str
    seed: int
    created_at: float
    last_used: float
    lock: threading.Lock = field(default_factory=threading.Lock)
    frames: list[dict] = field(default_factory=list)  # serialized responses


class DomainError(ValueError):
    """Validation failures that map to HTTP 422."""


class SessionStore:
    def __init__(self, ttl_s: float) -> None:
        self.ttl_s = ttl_s
        self._entries: dict[str, SessionEntry] = {}
        self._guard = threading.Lock()

    def _purge(self, now: float) -> None:
        stale = [k for k, e in self._entries.items() if now - e.last_used > self.ttl_s]
        for k in stale:
            del self._entries[k]

    def put(self, entry: SessionEntry) -> str:
        sid = uuid.uuid4().hex
        with self._guard:
            self._purge(time.monotonic())
            self._entries[sid] = entry
        return sid

    def get(self, sid: str) -> SessionEntry | None:
        now = time.monotonic()
        with self._guard:
            self._purge(now)
            entry = self._entries.get(sid)
            if entry is not None:
                entry.last_used = now
            return entry

    def delete(self, sid: str) -> bool:
        with self._guard:
            return self._entries.pop(sid, None) is not None


# -- payload -> domain -------------------------------------------------------


def _pose_from(values: list[float], name: str) -> Pose:
    try:
        return Pose(np.asarray(values, dtype=np.float64).reshape(4, 4))
    except ValueError as exc:
        raise DomainError(f"invalid {name}: {exc}") from exc


def _box_from(payload: BoxPayload) -> BBox:
    try:
        return BBox(np.asarray(payload.corners, dtype=np.float64).reshape(8, 3), payload.category)
    except ValueError as exc:
        raise DomainError(f"invalid box: {exc}") from exc


def _frame_from(payload: FramePayload, need_cloud: bool) -> FrameRecord:
    if need_cloud:
        if not payload.cloud_b64:
            raise DomainError("frame 0 needs cloud_b64")
    if payload.cloud_b64:
        try:
            cloud = benchkit.cloud_from_bytes(base64.b64decode(payload.cloud_b64))
        except Exception as exc:
            raise DomainError(f"invalid cloud payload: {exc}") from exc
    else:
        from lidarloop.scenemodel import PointCloud

        cloud = PointCloud.empty()
    ego = EgoState(
        speed=payload.ego.speed,
        acceleration=payload.ego.acceleration,
        steering_angle=payload.ego.steering_angle,
        ego2glb=_pose_from(payload.ego.ego2glb, "ego2glb"),
        li2ego=_pose_from(payload.ego.li2ego, "li2ego"),
    )
    return FrameRecord(
        timestamp=payload.timestamp,
        cloud=cloud,
        boxes=tuple(_box_from(b) for b in payload.boxes),
        ego=ego,
        scene_token=payload.scene_token,
    )


def _edit_from(payload: EditPayload) -> EditOp:
    try:
        if payload.kind == "move":
            if payload.box_id is None or payload.delta is None or len(payload.delta) != 3:
                raise ValueError("move needs box_id and a 3-vector delta")
            return EditOp.move(payload.box_id, payload.delta)
        if payload.kind == "remove":
            if payload.box_id is None:
                raise ValueError("remove needs box_id")
            return EditOp.remove(payload.box_id)
        if payload.box is None:
            raise ValueError("add needs a box")
        return EditOp.add(_box_from(payload.box))
    except ValueError as exc:
        raise DomainError(str(exc)) from exc


def _serialize_boxes(boxes) -> list[dict]:
    return [
        {"category": b.category, "corners": [float(v) for v in b.corners.ravel()]}
        for b in boxes
    ]


def _serialize_frame(session: Session, step_index: int, seed: int, kind: str) -> dict:
    cloud_bytes = benchkit.cloud_to_bytes(session.last_cloud)
    buf = io.BytesIO()
    write_range_image(session.last_image, buf)
    frame = session.frames[step_index]
    return {
        "step": step_index,
        "seed": seed,
        "generator": kind,
        "point_count": len(session.last_cloud),
        "cloud_b64": base64.b64encode(cloud_bytes).decode("ascii"),
        "range_image_b64": base64.b64encode(buf.getvalue()).decode("ascii"),
        "boxes": _serialize_boxes(frame.boxes),
        "timestamp": frame.timestamp,
    }


# -- app ---------------------------------------------------------------------


def create_app(config: ServiceConfig | None = None) -> FastAPI:
    config = config or ServiceConfig()
    app = FastAPI(title="lidarloop session service")
    store = SessionStore(config.session_ttl_s)
    app.state.store = store
    app.state.config = config
    model_cache: dict[str, GeneratorModel] = {}

    @app.exception_handler(RequestValidationError)
    async def malformed_payload(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": exc.errors()})

    @app.exception_handler(DomainError)
    async def domain_error(request: Request, exc: DomainError):
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    def load_scenario(req: CreateSessionRequest):
        if req.inline is not None:
            frames = [
                _frame_from(p, need_cloud=(i == 0)) for i, p in enumerate(req.inline.frames)
            ]
            try:
                beams = BeamTable(
                    np.asarray(req.inline.beams.heights),
                    np.asarray(req.inline.beams.elevations),
                )
            except ValueError as exc:
                raise DomainError(f"invalid beams: {exc}") from exc
            return frames, beams, req.inline.width, req.inline.r_max
        if req.scenario is None:
            raise DomainError("request needs either 'scenario' or 'inline'")
        if config.scenario_dir is None:
            raise DomainError("server has no scenario directory configured")
        root = Path(config.scenario_dir) / req.scenario
        if not (root / "index.jsonl").exists():
            raise DomainError(f"unknown scenario {req.scenario!r}")
        try:
            index = benchkit.ingest(root / "index.jsonl")
            beams, width, r_max = benchkit.load_beams(root)
        except ValueError as exc:
            raise DomainError(str(exc)) from exc
        return list(index.frames), beams, width, r_max

    def make_generator(kind: str, beams: BeamTable, width: int, r_max: float, categories: int):
        if kind == "sde":
            return SdeBaselineGenerator()
        key = f"{beams.rows}x{width}"
        if key not in model_cache:
            if config.checkpoint is not None:
                model = load_model(config.checkpoint)
                if (model.config.rows, model.config.width) != (beams.rows, width):
                    raise DomainError(
                        "checkpoint resolution does not match the scenario"
                    )
            else:
                model = GeneratorModel(
                    GeneratorConfig(
                        rows=beams.rows, width=width, r_max=r_max, categories=categories
                    ),
                    seed=0,
                )
            model_cache[key] = model
        return DiffusionGenerator(model_cache[key])

    @app.post("/sessions", status_code=201)
    def create_session(req: CreateSessionRequest):
        frames, beams, width, r_max = load_scenario(req)
        if not frames:
            raise DomainError("scenario has no frames")
        categories = max([3] + [b.category + 1 for f in frames for b in f.boxes])
        generator = make_generator(req.generator, beams, width, r_max, categories)
        try:
            session = init_session(
                frames[0], frames, generator, req.seed, beams, width, r_max, categories
            )
        except ValueError as exc:
            raise DomainError(str(exc)) from exc
        entry = SessionEntry(
            session=session,
            generator_kind=req.generator,
            seed=req.seed,
            created_at=time.monotonic(),
            last_used=time.monotonic(),
        )
        entry.frames.append(_serialize_frame(session, 0, req.seed, req.generator))
        sid = store.put(entry)
        return {
            "id": sid,
            "step": 0,
            "horizon": session.horizon,
            "generator": req.generator,
            "seed": req.seed,
        }

    @app.post("/sessions/{sid}/step")
    def post_step(sid: str, req: StepRequest):
        entry = store.get(sid)
        if entry is None:
            return JSONResponse(status_code=404, content={"detail": "unknown session"})
        if not entry.lock.acquire(blocking=False):
            return JSONResponse(
                status_code=409, content={"detail": "a step is already in flight"}
            )
        try:
            session = entry.session
            if session.step_index >= session.horizon:
                return JSONResponse(
                    status_code=409, content={"detail": "scenario exhausted"}
                )
            edits = [_edit_from(e) for e in req.edits]
            try:
                step(session, edits)
            except ValueError as exc:
                raise DomainError(str(exc)) from exc
            payload = _serialize_frame(
                session, session.step_index, entry.seed, entry.generator_kind
            )
            entry.frames.append(payload)
            return payload
        finally:
            entry.lock.release()

    @app.get("/sessions/{sid}/frames/{k}")
    def get_frame(sid: str, k: int):
        entry = store.get(sid)
        if entry is None:
            return JSONResponse(status_code=404, content={"detail": "unknown session"})
        if k < 0 or k >= len(entry.frames):
            return JSONResponse(status_code=404, content={"detail": f"frame {k} not generated"})
        return entry.frames[k]

    @app.delete("/sessions/{sid}")
    def delete_session(sid: str):
        if not store.delete(sid):
            return JSONResponse(status_code=404, content={"detail": "unknown session"})
        return {"deleted": True}

    @app.get("/healthz")
    def healthz():
        from lidarloop import kernel_backend

        return {"status": "ok", "kernel_backend": kernel_backend}

    return app


def run_server(
    host: str = "127.0.0.1",
    port: int = 8323,
    scenario_dir: str | None = None,
    session_ttl_s: float = 3600.0,
    checkpoint: str | None = None,
) -> None:
    import uvicorn

    app = create_app(
        ServiceConfig(
            scenario_dir=Path(scenario_dir) if scenario_dir else None,
            session_ttl_s=session_ttl_s,
            checkpoint=Path(checkpoint) if checkpoint else None,
        )
    )
    uvicorn.run(app, host=host, port=port, log_level="warning")
