"""Scenario persistence: LGPC point-cloud files and the line-delimited index.

Point-cloud file: magic "LGPC", u32 count, then count * 4 f32 little-endian
(x, y, z, intensity). Index: UTF-8, one JSON frame record per line; poses
are 16 f64 row-major, box corners are stored in the global frame and
converted into the sensor frame on ingest.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Sequence

import numpy as np

from lidarloop.rangeview import BeamTable
from lidarloop.scenemodel import BBox, EgoState, FrameRecord, PointCloud, Pose

_MAGIC = b"LGPC"


def write_cloud(cloud: PointCloud, fp: BinaryIO) -> None:
    fp.write(struct.pack("<4sI", _MAGIC, len(cloud)))
    fp.write(np.ascontiguousarray(cloud.as_array(), dtype="<f4").tobytes())


def read_cloud(fp: BinaryIO) -> PointCloud:
    head = fp.read(8)
    if len(head) != 8:
        raise ValueError("truncated point cloud header")
    magic, count = struct.unpack("<4sI", head)
    if magic != _MAGIC:
        raise ValueError(f"bad magic {magic!r}, expected {_MAGIC!r}")
    raw = fp.read(count * 16)
    if len(raw) != count * 16:
        raise ValueError("truncated point cloud payload")
    data = np.frombuffer(raw, dtype="<f4")
    arr = data.reshape(count, 4).astype(np.float64)
    arr[:, 3] = np.clip(arr[:, 3], 0.0, 1.0)  # f32 round-trip guard
    return PointCloud.from_array(arr)


def save_cloud(cloud: PointCloud, path) -> None:
    with open(path, "wb") as fp:
        write_cloud(cloud, fp)


def load_cloud(path) -> PointCloud:
    with open(path, "rb") as fp:
        return read_cloud(fp)


def cloud_to_bytes(cloud: PointCloud) -> bytes:
    import io as _io

    buf = _io.BytesIO()
    write_cloud(cloud, buf)
    return buf.getvalue()


def cloud_from_bytes(raw: bytes) -> PointCloud:
    import io as _io

    return read_cloud(_io.BytesIO(raw))


@dataclass(frozen=True)
class ScenarioIndex:
    """Loaded scenario: one FrameRecord per index line, plus source paths."""

    frames: tuple[FrameRecord, ...]
    cloud_paths: tuple[str, ...]
    root: str


def _pose_list(pose: Pose) -> list[float]:
    return [float(v) for v in pose.matrix.ravel()]


def _frame_line(frame: FrameRecord, cloud_path: str) -> str:
    sensor2glb = frame.ego.sensor2glb
    boxes = [
        {
            "category": b.category,
            "corners": [float(v) for v in b.transformed(sensor2glb).corners.ravel()],
        }
        for b in frame.boxes
    ]
    rec = {
        "scene_token": frame.scene_token,
        "timestamp": frame.timestamp,
        "cloud": cloud_path,
        "speed": frame.ego.speed,
        "acceleration": frame.ego.acceleration,
        "steering_angle": frame.ego.steering_angle,
        "ego2glb": _pose_list(frame.ego.ego2glb),
        "li2ego": _pose_list(frame.ego.li2ego),
        "boxes": boxes,
    }
    return json.dumps(rec)


def write_scenario(
    out_dir,
    frames: Sequence[FrameRecord],
    beams: BeamTable | None = None,
    width: int | None = None,
    r_max: float | None = None,
) -> Path:
    """Persist a scenario directory: index.jsonl, clouds/, optional beams.json."""
    out = Path(out_dir)
    (out / "clouds").mkdir(parents=True, exist_ok=True)
    lines = []
    for k, frame in enumerate(frames):
        rel = f"clouds/{k:05d}.lgpc"
        save_cloud(frame.cloud, out / rel)
        lines.append(_frame_line(frame, rel))
    (out / "index.jsonl").write_text("\n".join(lines) + "\n", encoding="utf-8")
    if beams is not None:
        meta = {
            "heights": [float(v) for v in beams.heights],
            "elevations": [float(v) for v in beams.elevations],
            "width": width,
            "r_max": r_max,
        }
        (out / "beams.json").write_text(json.dumps(meta), encoding="utf-8")
    return out / "index.jsonl"


def load_beams(scenario_dir) -> tuple[BeamTable, int, float]:
    meta = json.loads((Path(scenario_dir) / "beams.json").read_text(encoding="utf-8"))
    return (
        BeamTable(np.array(meta["heights"]), np.array(meta["elevations"])),
        int(meta["width"]),
        float(meta["r_max"]),
    )


def _parse_pose(values, line_no: int, field_name: str) -> Pose:
    arr = np.asarray(values, dtype=np.float64)
    if arr.size != 16:
        raise ValueError(f"line {line_no}: {field_name} needs 16 values, got {arr.size}")
    try:
        return Pose(arr.reshape(4, 4))
    except ValueError as exc:
        raise ValueError(f"line {line_no}: invalid {field_name}: {exc}") from exc


def ingest(index_path) -> ScenarioIndex:
    """Parse and validate an index file, loading clouds and converting boxes.

    Box corners in the file live in the global frame; FrameRecords carry
    them in each frame's sensor frame.
    """
    index_path = Path(index_path)
    root = index_path.parent
    frames: list[FrameRecord] = []
    paths: list[str] = []
    prev_ts: float | None = None
    prev_token: str | None = None
    with open(index_path, encoding="utf-8") as fp:
        for line_no, line in enumerate(fp, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"line {line_no}: malformed JSON: {exc}") from exc
            missing = [
                k
                for k in ("scene_token", "timestamp", "cloud", "ego2glb", "li2ego")
                if k not in rec
            ]
            if missing:
                raise ValueError(f"line {line_no}: missing field(s) {missing}")
            ts = float(rec["timestamp"])
            token = str(rec["scene_token"])
            if prev_ts is not None:
                if ts < prev_ts:
                    raise ValueError(
                        f"line {line_no}: timestamp {ts} goes backwards (prev {prev_ts})"
                    )
                if token == prev_token and ts == prev_ts:
                    raise ValueError(
                        f"line {line_no}: duplicate timestamp {ts} within scene {token!r}"
                    )
            prev_ts, prev_token = ts, token

            cloud_rel = str(rec["cloud"])
            cloud_path = root / cloud_rel
            if not cloud_path.exists():
                raise ValueError(f"line {line_no}: cloud file not found: {cloud_path}")
            cloud = load_cloud(cloud_path)

            ego2glb = _parse_pose(rec["ego2glb"], line_no, "ego2glb")
            li2ego = _parse_pose(rec["li2ego"], line_no, "li2ego")
            ego = EgoState(
                speed=float(rec.get("speed", 0.0)),
                acceleration=float(rec.get("acceleration", 0.0)),
                steering_angle=float(rec.get("steering_angle", 0.0)),
                ego2glb=ego2glb,
                li2ego=li2ego,
            )
            glb2sensor = ego.sensor2glb.inverse()
            boxes = []
            for bi, b in enumerate(rec.get("boxes", [])):
                corners = np.asarray(b.get("corners", []), dtype=np.float64)
                if corners.size != 24:
                    raise ValueError(
                        f"line {line_no}: box {bi} needs 24 corner values, got {corners.size}"
                    )
                try:
                    boxes.append(
                        BBox(corners.reshape(8, 3), int(b.get("category", 0))).transformed(
                            glb2sensor
                        )
                    )
                except ValueError as exc:
                    raise ValueError(f"line {line_no}: box {bi}: {exc}") from exc
            frames.append(
                FrameRecord(
                    timestamp=ts,
                    cloud=cloud,
                    boxes=tuple(boxes),
                    ego=ego,
                    scene_token=token,
                )
            )
            paths.append(cloud_rel)
    return ScenarioIndex(tuple(frames), tuple(paths), str(root))
