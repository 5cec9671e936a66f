"""Scene Decoupling Estimation: deterministic one-step scene forecasting.

The previous frame is split into per-box foreground groups and background.
Foreground groups follow their boxes: each current box adopts the
nearest-center previous box of the same category (centers compared after
mapping the previous frame into the current sensor frame), and the donor's
points are warped by the sensor motion plus the box-center delta. The
background is re-expressed using only the rotation part of the sensor
motion.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from lidarloop.scenemodel import (
    BBox,
    EgoState,
    FrameRecord,
    PointCloud,
    Pose,
    apply_pose,
    box_center,
    compose_relative,
    merge_clouds,
    points_in_box,
    rotation_only,
)

GroupKey = tuple[int, int]  # (category, per-category box ordinal)


@dataclass(frozen=True)
class DecoupledScene:
    """Partition of a cloud into per-box groups and background, by index."""

    foreground_groups: Mapping[GroupKey, PointCloud]
    background: PointCloud
    group_indices: Mapping[GroupKey, np.ndarray]
    background_indices: np.ndarray

    @property
    def foreground(self) -> PointCloud:
        return merge_clouds([self.foreground_groups[k] for k in sorted(self.foreground_groups)])


@dataclass(frozen=True)
class BoxMatching:
    """For each current group key, the matched previous key (or absent)."""

    matches: Mapping[GroupKey, GroupKey]


def group_boxes(boxes: Sequence[BBox]) -> dict[GroupKey, BBox]:
    """Key boxes as (category, ordinal within category, in list order)."""
    seen: dict[int, int] = {}
    out: dict[GroupKey, BBox] = {}
    for box in boxes:
        j = seen.get(box.category, 0)
        seen[box.category] = j + 1
        out[(box.category, j)] = box
    return out


def decouple(frame: FrameRecord) -> DecoupledScene:
    """Assign each point to the first containing box, else background.

    Box order is category-major, then list order, which keeps overlapping
    boxes disjoint in a reproducible way.
    """
    cloud = frame.cloud
    keyed = group_boxes(frame.boxes)
    claimed = np.zeros(len(cloud), dtype=bool)
    groups: dict[GroupKey, PointCloud] = {}
    indices: dict[GroupKey, np.ndarray] = {}
    for key in sorted(keyed):
        _, inside_idx = points_in_box(cloud, keyed[key])
        fresh = inside_idx[~claimed[inside_idx]]
        claimed[fresh] = True
        groups[key] = cloud.take(fresh)
        indices[key] = fresh
    bg_idx = np.flatnonzero(~claimed)
    return DecoupledScene(groups, cloud.take(bg_idx), indices, bg_idx)


def match_boxes(
    prev_boxes: Sequence[BBox],
    cur_boxes: Sequence[BBox],
    e_rel: Pose | None = None,
) -> BoxMatching:
    """Nearest same-category previous box for every current box.

    Previous centers are first mapped through e_rel so both live in the
    current sensor frame; exact ties go to the lower previous ordinal.
    """
    e_rel = e_rel if e_rel is not None else Pose.identity()
    prev_keyed = group_boxes(prev_boxes)
    cur_keyed = group_boxes(cur_boxes)
    prev_centers = {k: e_rel.apply(box_center(b)[None, :])[0] for k, b in prev_keyed.items()}
    matches: dict[GroupKey, GroupKey] = {}
    for key in sorted(cur_keyed):
        category = key[0]
        candidates = [k for k in sorted(prev_centers) if k[0] == category]
        if not candidates:
            continue
        center = box_center(cur_keyed[key])
        dists = np.array([np.linalg.norm(center - prev_centers[k]) for k in candidates])
        matches[key] = candidates[int(dists.argmin())]
    return BoxMatching(matches)


def estimate_foreground(
    prev: DecoupledScene,
    prev_boxes: Sequence[BBox],
    cur_boxes: Sequence[BBox],
    e_rel: Pose,
) -> PointCloud:
    """Warp matched previous groups into the current frame.

    Each matched group is viewpoint-adjusted by e_rel, then shifted by the
    delta between the current box center and the (e_rel-mapped) previous
    box center. Unmatched current boxes contribute nothing; unmatched
    previous groups are dropped.
    """
    matching = match_boxes(prev_boxes, cur_boxes, e_rel)
    prev_keyed = group_boxes(prev_boxes)
    cur_keyed = group_boxes(cur_boxes)
    parts = []
    for cur_key in sorted(matching.matches):
        prev_key = matching.matches[cur_key]
        group = prev.foreground_groups.get(prev_key)
        if group is None or len(group) == 0:
            continue
        warped = apply_pose(group, e_rel)
        prev_center_mapped = e_rel.apply(box_center(prev_keyed[prev_key])[None, :])[0]
        delta = box_center(cur_keyed[cur_key]) - prev_center_mapped
        parts.append(PointCloud(warped.xyz + delta, warped.intensity, warped.frame_id))
    return merge_clouds(parts) if parts else PointCloud.empty()


def estimate_background(prev_bg: PointCloud, e_rel: Pose) -> PointCloud:
    """Re-express the background using only the rotation part of e_rel."""
    return apply_pose(prev_bg, rotation_only(e_rel))


def sde_step(
    prev_frame: FrameRecord,
    cur_boxes: Sequence[BBox],
    cur_ego: EgoState,
) -> tuple[PointCloud, PointCloud]:
    """One forecasting step: (estimated foreground, estimated background)."""
    e_rel = compose_relative(prev_frame.ego, cur_ego)
    scene = decouple(prev_frame)
    fg = estimate_foreground(scene, prev_frame.boxes, cur_boxes, e_rel)
    bg = estimate_background(scene.background, e_rel)
    return fg, bg
