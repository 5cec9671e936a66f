"""Synthetic ray-cast world: deterministic ground-truth scans and scenarios.

The world is a z=0 ground plane plus oriented cuboids: unannotated static
"buildings" and annotated actors on linear trajectories. Scans are cast
from the same per-row ray origins the range-image codec assumes, so a
scan of the world is exactly invertible by the codec.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from lidarloop import _kernels
from lidarloop.rangeview import BeamTable
from lidarloop.scenemodel import BBox, EgoState, FrameRecord, PointCloud, Pose

GROUND_INTENSITY = 0.3
BOX_INTENSITY = 0.8


@dataclass(frozen=True)
class Cuboid:
    """A box in the world, optionally moving along a straight line."""

    size: tuple[float, float, float]        # (length, width, height)
    center0: tuple[float, float, float]     # world frame at t = 0
    yaw: float = 0.0
    velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)
    category: int = 0
    annotated: bool = False                 # actors yes, buildings no

    def center(self, t: float) -> np.ndarray:
        return np.asarray(self.center0) + t * np.asarray(self.velocity)

    def bbox_world(self, t: float) -> BBox:
        return BBox.from_center_size_yaw(self.center(t), self.size, self.yaw, self.category)

    def kernel_row(self, t: float) -> np.ndarray:
        c, s = np.cos(self.yaw), np.sin(self.yaw)
        rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        half = np.asarray(self.size) / 2.0
        return np.concatenate([self.center(t), rot.ravel(), half])


@dataclass(frozen=True)
class EgoTrack:
    """Constant-speed trajectory with a constant yaw rate (straight or arc)."""

    start: tuple[float, float] = (0.0, 0.0)
    speed: float = 3.0
    yaw0: float = 0.0
    yaw_rate: float = 0.0

    def pose(self, t: float) -> Pose:
        psi = self.yaw0 + self.yaw_rate * t
        if abs(self.yaw_rate) < 1e-12:
            x = self.start[0] + self.speed * t * np.cos(self.yaw0)
            y = self.start[1] + self.speed * t * np.sin(self.yaw0)
        else:
            k = self.speed / self.yaw_rate
            x = self.start[0] + k * (np.sin(psi) - np.sin(self.yaw0))
            y = self.start[1] - k * (np.cos(psi) - np.cos(self.yaw0))
        return Pose.from_yaw(psi, np.array([x, y, 0.0]))

    def ego_state(self, t: float) -> EgoState:
        return EgoState(
            speed=self.speed,
            acceleration=0.0,
            steering_angle=self.yaw_rate,
            ego2glb=self.pose(t),
            li2ego=Pose.identity(),
        )


@dataclass(frozen=True)
class SynthWorld:
    boxes: tuple[Cuboid, ...]
    ego: EgoTrack = field(default_factory=EgoTrack)
    ground: bool = True

    def __post_init__(self) -> None:
        # actors and buildings must not start interpenetrated
        world_boxes = [b.bbox_world(0.0) for b in self.boxes]
        for i in range(len(world_boxes)):
            for j in range(i + 1, len(world_boxes)):
                a, b = world_boxes[i], world_boxes[j]
                if a.contains(b.corners).any() or b.contains(a.corners).any():
                    raise ValueError(f"boxes {i} and {j} interpenetrate at t=0")

    def annotated_boxes(self, t: float) -> list[BBox]:
        return [b.bbox_world(t) for b in self.boxes if b.annotated]

    def kernel_rows(self, t: float) -> np.ndarray:
        if not self.boxes:
            return np.zeros((0, 15))
        return np.stack([b.kernel_row(t) for b in self.boxes])


def default_beams(rows: int = 8) -> BeamTable:
    """Fixed desk-scale sensor: one beam table shared across a corpus."""
    heights = np.linspace(1.74, 1.88, rows)
    elevations = np.linspace(-0.28, 0.04, rows)
    return BeamTable(heights, elevations)


def ray_grid(beams: BeamTable, width: int) -> tuple[np.ndarray, np.ndarray]:
    """Sensor-frame origins and unit directions for every (row, column) ray.

    Rays are ordered row-major over (row j, column u); azimuths sit at
    pixel centers so scans are pixel-exact under the codec.
    """
    j = np.repeat(np.arange(beams.rows), width)
    u = np.tile(np.arange(width), beams.rows)
    theta = np.pi - 2.0 * np.pi * (u + 0.5) / width
    phi = beams.elevations[j]
    origins = np.zeros((j.size, 3))
    origins[:, 2] = beams.heights[j]
    dirs = np.stack(
        [np.cos(phi) * np.cos(theta), np.cos(phi) * np.sin(theta), np.sin(phi)], axis=1
    )
    return origins, dirs


def raycast(
    world: SynthWorld,
    sensor_pose: Pose,
    beams: BeamTable,
    width: int,
    t: float = 0.0,
    max_range: float | None = None,
) -> PointCloud:
    """Scan the world from a sensor pose; returns sensor-frame points.

    Every ray keeps its first intersection among the ground plane and all
    cuboids; rays that hit nothing (or only beyond max_range) contribute
    no point.
    """
    origins_s, dirs_s = ray_grid(beams, width)
    origins_w = sensor_pose.apply(origins_s)
    dirs_w = dirs_s @ sensor_pose.rotation.T
    dist, code = _kernels.raycast(origins_w, dirs_w, world.kernel_rows(t), world.ground)
    hit = np.isfinite(dist)
    if max_range is not None:
        hit &= dist <= max_range
    pts = origins_s[hit] + dist[hit, None] * dirs_s[hit]
    inten = np.where(code[hit] == 0, GROUND_INTENSITY, BOX_INTENSITY)
    return PointCloud(pts, inten)


def cast_rays(
    world: SynthWorld, origins_w: np.ndarray, dirs_w: np.ndarray, t: float = 0.0
) -> tuple[np.ndarray, np.ndarray]:
    """Low-level world-frame casting; returns (distance, surface code)."""
    return _kernels.raycast(origins_w, dirs_w, world.kernel_rows(t), world.ground)


@dataclass(frozen=True)
class ScenarioConfig:
    rows: int = 8
    width: int = 512
    r_max: float = 80.0
    cadence_s: float = 0.5
    n_buildings: int = 5
    n_actors: int = 2
    categories: int = 3
    phi_range: tuple[float, float] = (-0.30, 0.05)
    beam_height_range: tuple[float, float] = (1.6, 2.0)


def make_world(seed: int, config: ScenarioConfig = ScenarioConfig()) -> tuple[SynthWorld, BeamTable]:
    """Deterministic world + beam table for a seed.

    Buildings line both sides of a corridor along +x; actors drive inside
    the corridor so they never intersect the buildings.
    """
    rng = np.random.default_rng(seed)
    phi = np.sort(rng.uniform(*config.phi_range, config.rows))
    while np.diff(phi).min() < 0.01:  # keep rows distinguishable
        phi = np.sort(rng.uniform(*config.phi_range, config.rows))
    h = rng.uniform(*config.beam_height_range, config.rows)
    beams = BeamTable(h, phi)

    def clear_of(others: list[Cuboid], candidate: Cuboid) -> bool:
        # conservative: center separation beyond the summed half-diagonals
        c = np.asarray(candidate.center0)
        rad = np.linalg.norm(candidate.size) / 2.0
        for other in others:
            gap = np.linalg.norm(c - np.asarray(other.center0))
            if gap < rad + np.linalg.norm(other.size) / 2.0 + 0.5:
                return False
        return True

    boxes: list[Cuboid] = []
    for i in range(config.n_buildings):
        side = 1 if i % 2 == 0 else -1
        for _ in range(50):
            sx = rng.uniform(4.0, 9.0)
            sy = rng.uniform(3.0, 6.0)
            sz = rng.uniform(4.0, 7.0)
            x = rng.uniform(5.0, 45.0)
            y = side * rng.uniform(12.0, 20.0)
            candidate = Cuboid(
                size=(sx, sy, sz),
                center0=(x, y, sz / 2.0),
                yaw=rng.uniform(-0.3, 0.3),
            )
            if clear_of(boxes, candidate):
                boxes.append(candidate)
                break
    for i in range(config.n_actors):
        for _ in range(50):
            lane = rng.uniform(-4.0, 4.0)
            x = rng.uniform(6.0, 14.0) + 10.0 * i
            speed = rng.uniform(1.0, 3.0)
            candidate = Cuboid(
                size=(4.5, 2.0, 1.8),
                center0=(x, lane, 0.9),
                yaw=0.0,
                velocity=(speed, 0.0, 0.0),
                category=int(rng.integers(0, config.categories)),
                annotated=True,
            )
            if clear_of(boxes, candidate):
                boxes.append(candidate)
                break
    ego = EgoTrack(
        start=(0.0, 0.0),
        speed=float(rng.uniform(1.5, 3.0)),
        yaw0=0.0,
        yaw_rate=float(rng.uniform(-0.06, 0.06)),
    )
    return SynthWorld(tuple(boxes), ego), beams


def synth_scenario(
    seed: int,
    frames: int,
    config: ScenarioConfig = ScenarioConfig(),
    world: SynthWorld | None = None,
    beams: BeamTable | None = None,
    scene_token: str | None = None,
) -> tuple[list[FrameRecord], SynthWorld, BeamTable]:
    """Ray-cast a full scenario: per-frame clouds, sensor-frame boxes, ego."""
    if world is None or beams is None:
        world, beams = make_world(seed, config)
    token = scene_token if scene_token is not None else f"synth-{seed}"
    records = []
    for k in range(frames):
        t = k * config.cadence_s
        ego_state = world.ego.ego_state(t)
        sensor_pose = ego_state.sensor2glb
        cloud = raycast(world, sensor_pose, beams, config.width, t, max_range=config.r_max)
        glb2sensor = sensor_pose.inverse()
        boxes = tuple(b.transformed(glb2sensor) for b in world.annotated_boxes(t))
        records.append(
            FrameRecord(
                timestamp=t,
                cloud=cloud,
                boxes=boxes,
                ego=ego_state,
                scene_token=token,
            )
        )
    return records, world, beams
