"""Core domain types and rigid-geometry operations shared by every module.

All types are immutable after construction and all operations are pure,
so unrestricted concurrent use is safe.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterator, NamedTuple, Sequence

import numpy as np

_ORTHO_ACCEPT = 1e-9   # orthonormality drift accepted as-is
_ORTHO_REPAIR = 1e-6   # drift repaired by polar projection; beyond this, reject
_BOX_TOL = 1e-6        # parallelepiped closure tolerance, meters
_DEGENERATE_EXTENT = 1e-9
_BOUNDARY_TOL = 1e-9   # keeps on-face points inside after rigid transforms


class Point(NamedTuple):
    x: float
    y: float
    z: float
    intensity: float = 0.0


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class PointCloud:
    """Unordered set of (x, y, z, intensity) samples in one sensor frame."""

    xyz: np.ndarray                 # (N, 3) float64
    intensity: np.ndarray           # (N,) float64 in [0, 1]
    frame_id: str = "sensor"

    def __post_init__(self) -> None:
        xyz = np.asarray(self.xyz, dtype=np.float64).reshape(-1, 3)
        inten = np.asarray(self.intensity, dtype=np.float64).reshape(-1)
        if inten.shape[0] != xyz.shape[0]:
            raise ValueError(
                f"intensity length {inten.shape[0]} != point count {xyz.shape[0]}"
            )
        if xyz.size and not np.isfinite(xyz).all():
            raise ValueError("point coordinates must be finite")
        if inten.size and (not np.isfinite(inten).all() or inten.min() < 0 or inten.max() > 1):
            raise ValueError("intensity must be finite and in [0, 1]")
        object.__setattr__(self, "xyz", _readonly(xyz))
        object.__setattr__(self, "intensity", _readonly(inten))

    @classmethod
    def empty(cls, frame_id: str = "sensor") -> "PointCloud":
        return cls(np.zeros((0, 3)), np.zeros(0), frame_id)

    @classmethod
    def from_array(cls, arr: np.ndarray, frame_id: str = "sensor") -> "PointCloud":
        arr = np.asarray(arr, dtype=np.float64).reshape(-1, 4)
        return cls(arr[:, :3], arr[:, 3], frame_id)

    @classmethod
    def from_points(cls, points: Sequence[Point], frame_id: str = "sensor") -> "PointCloud":
        arr = np.array([(p.x, p.y, p.z, p.intensity) for p in points], dtype=np.float64)
        return cls.from_array(arr.reshape(-1, 4), frame_id)

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.xyz, self.intensity[:, None]], axis=1)

    def take(self, idx: np.ndarray) -> "PointCloud":
        return PointCloud(self.xyz[idx], self.intensity[idx], self.frame_id)

    def points(self) -> Iterator[Point]:
        for (x, y, z), i in zip(self.xyz, self.intensity):
            yield Point(x, y, z, i)

    def __len__(self) -> int:
        return self.xyz.shape[0]


def merge_clouds(clouds: Sequence[PointCloud], frame_id: str | None = None) -> PointCloud:
    """Concatenate clouds; all must share the frame unless one is overridden."""
    clouds = [c for c in clouds]
    if not clouds:
        return PointCloud.empty(frame_id or "sensor")
    fid = frame_id or clouds[0].frame_id
    xyz = np.concatenate([c.xyz for c in clouds], axis=0)
    inten = np.concatenate([c.intensity for c in clouds], axis=0)
    return PointCloud(xyz, inten, fid)


@dataclass(frozen=True)
class Pose:
    """4x4 homogeneous rigid transform (rotation R, translation t).

    Construction validates the bottom row and R's orthonormality: drift up
    to 1e-6 is repaired by polar projection (real pose files carry rounding
    noise); anything worse is rejected.
    """

    matrix: np.ndarray  # (4, 4) float64

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (4, 4):
            raise ValueError(f"pose matrix must be 4x4, got {m.shape}")
        if not np.isfinite(m).all():
            raise ValueError("pose matrix must be finite")
        if np.abs(m[3] - np.array([0.0, 0.0, 0.0, 1.0])).max() > _ORTHO_REPAIR:
            raise ValueError("pose bottom row must be (0, 0, 0, 1)")
        m = m.copy()
        m[3] = (0.0, 0.0, 0.0, 1.0)
        r = m[:3, :3]
        drift = np.abs(r.T @ r - np.eye(3)).max()
        if drift > _ORTHO_ACCEPT:
            if drift > _ORTHO_REPAIR:
                raise ValueError(f"rotation drift {drift:.3e} exceeds repair threshold")
            u, _, vt = np.linalg.svd(r)
            r = u @ vt
            if np.linalg.det(r) < 0:
                raise ValueError("rotation part is a reflection")
            m[:3, :3] = r
        if np.linalg.det(r) < 0:
            raise ValueError("rotation part is a reflection")
        object.__setattr__(self, "matrix", _readonly(m))

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(4))

    @classmethod
    def from_rt(cls, rotation: np.ndarray, translation: np.ndarray) -> "Pose":
        m = np.eye(4)
        m[:3, :3] = rotation
        m[:3, 3] = translation
        return cls(m)

    @classmethod
    def from_translation(cls, x: float, y: float, z: float) -> "Pose":
        return cls.from_rt(np.eye(3), np.array([x, y, z]))

    @classmethod
    def from_yaw(cls, yaw: float, translation: np.ndarray | None = None) -> "Pose":
        c, s = np.cos(yaw), np.sin(yaw)
        r = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        t = np.zeros(3) if translation is None else np.asarray(translation, dtype=np.float64)
        return cls.from_rt(r, t)

    @property
    def rotation(self) -> np.ndarray:
        return self.matrix[:3, :3]

    @property
    def translation(self) -> np.ndarray:
        return self.matrix[:3, 3]

    def compose(self, other: "Pose") -> "Pose":
        return Pose(self.matrix @ other.matrix)

    def inverse(self) -> "Pose":
        r = self.rotation.T
        return Pose.from_rt(r, -r @ self.translation)

    def apply(self, xyz: np.ndarray) -> np.ndarray:
        xyz = np.asarray(xyz, dtype=np.float64)
        return xyz @ self.rotation.T + self.translation


@dataclass(frozen=True)
class BBox:
    """3D box given as 8 explicit corners plus a semantic category index.

    Corners may arrive in any order; construction recovers the edge
    structure and rejects corner sets that do not close into a
    parallelepiped within 1e-6 m.
    """

    corners: np.ndarray  # (8, 3) float64
    category: int

    # derived, filled in by __post_init__
    axes: np.ndarray = field(init=False, repr=False)        # (3, 3) rows = unit edge dirs
    half_extents: np.ndarray = field(init=False, repr=False)  # (3,)
    corner_signs: np.ndarray = field(init=False, repr=False)  # (8, 3) in {-1, +1}

    def __post_init__(self) -> None:
        corners = np.asarray(self.corners, dtype=np.float64)
        if corners.shape != (8, 3):
            raise ValueError(f"box needs 8 corners, got shape {corners.shape}")
        if not np.isfinite(corners).all():
            raise ValueError("box corners must be finite")
        if int(self.category) < 0:
            raise ValueError("category must be >= 0")
        object.__setattr__(self, "category", int(self.category))
        axes, half, signs = _recover_box_frame(corners)
        object.__setattr__(self, "corners", _readonly(corners))
        object.__setattr__(self, "axes", _readonly(axes))
        object.__setattr__(self, "half_extents", _readonly(half))
        signs = np.array(signs, copy=True)
        signs.flags.writeable = False
        object.__setattr__(self, "corner_signs", signs)

    @classmethod
    def from_center_size_yaw(
        cls,
        center: np.ndarray,
        size: tuple[float, float, float],
        yaw: float,
        category: int = 0,
    ) -> "BBox":
        """Axis-convention constructor (length along x before yaw)."""
        length, width, height = size
        c, s = np.cos(yaw), np.sin(yaw)
        r = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        sx, sy, sz = length / 2.0, width / 2.0, height / 2.0
        local = np.array(
            [
                [-sx, -sy, -sz], [sx, -sy, -sz], [sx, sy, -sz], [-sx, sy, -sz],
                [-sx, -sy, sz], [sx, -sy, sz], [sx, sy, sz], [-sx, sy, sz],
            ]
        )
        return cls(local @ r.T + np.asarray(center, dtype=np.float64), category)

    @property
    def center(self) -> np.ndarray:
        return self.corners.mean(axis=0)

    def translated(self, delta: np.ndarray) -> "BBox":
        return BBox(self.corners + np.asarray(delta, dtype=np.float64), self.category)

    def transformed(self, pose: Pose) -> "BBox":
        return BBox(pose.apply(self.corners), self.category)

    def contains(self, xyz: np.ndarray) -> np.ndarray:
        """Boundary-inclusive membership for an (N, 3) array of points.

        Inclusivity carries a 1e-9 m guard so points lying exactly on a face
        stay inside after the box has been through rigid transforms.
        """
        if (self.half_extents < _DEGENERATE_EXTENT).any():
            raise ValueError(f"degenerate box: extents {self.half_extents}")
        local = (np.asarray(xyz, dtype=np.float64) - self.center) @ self.axes.T
        return (np.abs(local) <= self.half_extents + _BOUNDARY_TOL).all(axis=1)


def _recover_box_frame(corners: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Recover edge directions, half extents, and per-corner sign pattern.

    Tries every choice of 3 corner-0 neighbors as edge vectors and keeps the
    first whose parallelepiped reproduces all 8 corners within tolerance.
    """
    diffs = corners[1:] - corners[0]
    best = None
    for combo in combinations(range(7), 3):
        v = diffs[list(combo)]
        if np.abs(np.linalg.det(v)) < 1e-18:
            continue
        predicted = corners[0] + np.array(
            [[i, j, k] for i in (0, 1) for j in (0, 1) for k in (0, 1)]
        ) @ v
        # match each actual corner to its nearest predicted corner
        d = np.linalg.norm(corners[:, None, :] - predicted[None, :, :], axis=2)
        assign = d.argmin(axis=1)
        if len(set(assign.tolist())) != 8:
            continue
        err = d[np.arange(8), assign].max()
        if err <= _BOX_TOL and (best is None or err < best[0]):
            best = (err, v, assign)
    if best is None:
        raise ValueError("corners do not form a parallelepiped within 1e-6 m")
    _, v, assign = best
    lengths = np.linalg.norm(v, axis=1)
    order = np.argsort(-lengths)  # longest edge first, for determinism
    v = v[order]
    lengths = lengths[order]
    axes = v / lengths[:, None]
    half = lengths / 2.0
    # sign of each corner along each axis, relative to the centroid
    local = (corners - corners.mean(axis=0)) @ axes.T
    signs = np.where(local >= 0, 1, -1).astype(np.int8)
    return axes, half, signs


@dataclass(frozen=True)
class EgoState:
    """Ego dynamics plus the two poses locating the sensor in the world."""

    speed: float
    acceleration: float
    steering_angle: float
    ego2glb: Pose
    li2ego: Pose

    def __post_init__(self) -> None:
        for name in ("speed", "acceleration", "steering_angle"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    @classmethod
    def stationary(cls) -> "EgoState":
        return cls(0.0, 0.0, 0.0, Pose.identity(), Pose.identity())

    @property
    def sensor2glb(self) -> Pose:
        return self.ego2glb.compose(self.li2ego)


@dataclass(frozen=True)
class FrameRecord:
    """One timestep of a scenario: cloud, boxes, ego state, timing."""

    timestamp: float
    cloud: PointCloud
    boxes: tuple[BBox, ...]
    ego: EgoState
    scene_token: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "boxes", tuple(self.boxes))
        if not np.isfinite(self.timestamp):
            raise ValueError("timestamp must be finite")


# ---------------------------------------------------------------------------
# operations


def compose_relative(prev_ego: EgoState, cur_ego: EgoState) -> Pose:
    """Transform mapping prev-sensor coordinates into cur-sensor coordinates.

    Computed as (ego2glb_cur . li2ego_cur)^-1 . (ego2glb_prev . li2ego_prev).
    """
    return cur_ego.sensor2glb.inverse().compose(prev_ego.sensor2glb)


def apply_pose(cloud: PointCloud, pose: Pose) -> PointCloud:
    """Rigidly move every point; intensity and count are untouched."""
    return PointCloud(pose.apply(cloud.xyz), cloud.intensity, cloud.frame_id)


def rotation_only(pose: Pose) -> Pose:
    """Same rotation, zero translation."""
    return Pose.from_rt(pose.rotation, np.zeros(3))


def points_in_box(cloud: PointCloud, box: BBox) -> tuple[PointCloud, np.ndarray]:
    """Split out the points inside a box (boundary inclusive).

    Returns:
        (inside cloud, index array into the input cloud).
    """
    mask = box.contains(cloud.xyz) if len(cloud) else np.zeros(0, dtype=bool)
    idx = np.flatnonzero(mask)
    return cloud.take(idx), idx


def box_center(box: BBox) -> np.ndarray:
    """Mean of the 8 corners."""
    return box.center


def bottom_face(box: BBox) -> tuple[np.ndarray, np.ndarray]:
    """The 4-corner face with minimal mean z (sensor frame).

    Ties between faces are broken by corner index order. Returns the corners
    (in ascending original index) and their indices.
    """
    candidates = []
    for axis in range(3):
        for sign in (-1, 1):
            idx = np.flatnonzero(box.corner_signs[:, axis] == sign)
            mean_z = box.corners[idx, 2].mean()
            candidates.append((mean_z, tuple(idx.tolist()), idx))
    candidates.sort(key=lambda c: (c[0], c[1]))
    idx = candidates[0][2]
    return box.corners[idx], idx
