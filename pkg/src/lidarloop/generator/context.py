"""Per-step conditioning bundle consumed by any generator implementation.

Training and rollout build contexts through the same code path, so the
generator sees identical conditioning semantics in both regimes; only the
source of the previous frame differs (ground truth vs generated).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from lidarloop.conditioning import BoxMaskStack, box_masks, ego_feature, relpose_vector
from lidarloop.rangeview import BeamTable, RangeImage, project
from lidarloop.scenemodel import (
    BBox,
    EgoState,
    FrameRecord,
    PointCloud,
    compose_relative,
)
from lidarloop.sde import sde_step


@dataclass(frozen=True)
class GeneratorContext:
    """Everything a generator needs for one autoregressive step."""

    prev_image: RangeImage
    fg_image: RangeImage
    bg_image: RangeImage
    masks_cur: BoxMaskStack
    masks_prev: BoxMaskStack
    ego_vec: np.ndarray  # (19,)
    rel_vec: np.ndarray  # (16,)

    def __post_init__(self) -> None:
        shape = self.prev_image.shape
        if self.fg_image.shape != shape or self.bg_image.shape != shape:
            raise ValueError("context images must share (H, W)")
        if self.masks_cur.shape != shape or self.masks_prev.shape != shape:
            raise ValueError("mask stacks must match the image grid")

    @property
    def shape(self) -> tuple[int, int]:
        return self.prev_image.shape


def build_context(
    prev_cloud: PointCloud,
    prev_boxes: Sequence[BBox],
    prev_ego: EgoState,
    cur_boxes: Sequence[BBox],
    cur_ego: EgoState,
    beams: BeamTable,
    width: int,
    r_max: float,
    categories: int,
    mask_step: float = 0.2,
) -> GeneratorContext:
    """Assemble conditioning from the previous frame and current conditions."""
    prev_frame = FrameRecord(0.0, prev_cloud, tuple(prev_boxes), prev_ego, "ctx")
    e_rel = compose_relative(prev_ego, cur_ego)
    fg, bg = sde_step(prev_frame, cur_boxes, cur_ego)
    return GeneratorContext(
        prev_image=project(prev_cloud, beams, width, r_max),
        fg_image=project(fg, beams, width, r_max),
        bg_image=project(bg, beams, width, r_max),
        masks_cur=box_masks(cur_boxes, beams, width, categories, mask_step, r_max),
        masks_prev=box_masks(prev_boxes, beams, width, categories, mask_step, r_max),
        ego_vec=ego_feature(cur_ego),
        rel_vec=relpose_vector(e_rel),
    )
