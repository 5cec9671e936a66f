"""Control signals for the generator: box-projection masks, ego-state
features, and the relative-pose vector.

Box masks trace the bottom face of each box (corners, edges, and the two
diagonals, interpolated at a fixed metric step) through the range-image
projection, one binary channel per semantic category.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
from torch import nn

from lidarloop.rangeview import BeamTable, _per_row_geometry
from lidarloop.scenemodel import BBox, EgoState, PointCloud, Pose, bottom_face

EGO_FEATURE_DIM = 19  # speed, acceleration, steering + 16 pose entries


@dataclass(frozen=True)
class BoxMaskStack:
    """Per-category binary masks over the range image grid."""

    masks: np.ndarray  # (D, H, W) uint8 in {0, 1}

    def __post_init__(self) -> None:
        m = np.asarray(self.masks)
        if m.ndim != 3:
            raise ValueError("mask stack must be (categories, H, W)")
        if m.size and not np.isin(m, (0, 1)).all():
            raise ValueError("mask values must be 0 or 1")
        m = np.ascontiguousarray(m, dtype=np.uint8)
        m.flags.writeable = False
        object.__setattr__(self, "masks", m)

    @property
    def categories(self) -> int:
        return self.masks.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.masks.shape[1], self.masks.shape[2]


def _face_cycle(box: BBox) -> np.ndarray:
    """Bottom-face corners ordered as a cycle (edges = consecutive pairs)."""
    corners, idx = bottom_face(box)
    signs = box.corner_signs[idx]
    # the face is constant along one axis; order by the other two signs
    varying = [k for k in range(3) if not (signs[:, k] == signs[0, k]).all()]
    a, b = varying
    want = [(-1, -1), (1, -1), (1, 1), (-1, 1)]
    order = [int(np.flatnonzero((signs[:, a] == sa) & (signs[:, b] == sb))[0]) for sa, sb in want]
    return corners[order]


def interpolate_bottom_face(box: BBox, step: float) -> PointCloud:
    """Bottom-face outline: corners plus points every `step` meters along
    the 4 edges and both diagonals (diagonals always get at least their
    midpoint)."""
    if step <= 0:
        raise ValueError("step must be positive")
    cycle = _face_cycle(box)
    pts = [cycle]
    segments = [(cycle[i], cycle[(i + 1) % 4], False) for i in range(4)]
    segments += [(cycle[0], cycle[2], True), (cycle[1], cycle[3], True)]
    for a, b, is_diagonal in segments:
        length = float(np.linalg.norm(b - a))
        if length < 1e-9 and not is_diagonal:
            raise ValueError("degenerate bottom face edge")
        n = int(np.ceil(length / step)) - 1
        if is_diagonal:
            n = max(1, n)
        if n > 0:
            frac = (np.arange(1, n + 1) / (n + 1))[:, None]
            pts.append(a[None, :] + frac * (b - a)[None, :])
    xyz = np.concatenate(pts, axis=0)
    return PointCloud(xyz, np.ones(len(xyz)))


def box_masks(
    boxes: Sequence[BBox],
    beams: BeamTable,
    width: int,
    categories: int,
    step: float = 0.2,
    r_max: float = 80.0,
) -> BoxMaskStack:
    """Project every box's bottom-face outline into its category channel.

    Projection reuses the range-image pixel geometry but ignores depth
    competition; points beyond r_max fall outside the image and are dropped.
    """
    height = beams.rows
    masks = np.zeros((categories, height, width), dtype=np.uint8)
    for box in boxes:
        if box.category >= categories:
            raise ValueError(f"box category {box.category} >= configured {categories}")
        outline = interpolate_bottom_face(box, step)
        r_all, elev_all = _per_row_geometry(outline.xyz, beams)
        row = np.abs(elev_all - beams.elevations[None, :]).argmin(axis=1)
        r = r_all[np.arange(len(outline)), row]
        keep = (r > 1e-9) & (r <= r_max)
        if not keep.any():
            continue
        theta = np.arctan2(outline.xyz[keep, 1], outline.xyz[keep, 0])
        u = np.floor(width - (theta + np.pi) / (2 * np.pi) * width).astype(np.int64) % width
        v = height - 1 - row[keep]
        masks[box.category, v, u] = 1
    return BoxMaskStack(masks)


class MaskEncoder(nn.Module):
    """Patchify a mask stack into embedded tokens with a 2D positional code."""

    def __init__(
        self,
        categories: int,
        height: int,
        width: int,
        dim: int = 32,
        patch: int = 8,
        seed: int = 0,
    ) -> None:
        super().__init__()
        if height % patch or width % patch:
            raise ValueError(f"image {height}x{width} not divisible by patch {patch}")
        self.patch = patch
        self.grid = (height // patch, width // patch)
        self.embed = nn.Conv2d(categories, dim, kernel_size=patch, stride=patch)
        self.pos = nn.Parameter(torch.empty(1, dim, *self.grid))
        gen = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            for p in self.parameters():
                p.copy_(torch.randn(p.shape, generator=gen) * 0.02)

    @property
    def tokens(self) -> int:
        return self.grid[0] * self.grid[1]

    def forward(self, stack: torch.Tensor) -> torch.Tensor:
        """(B, D, H, W) float -> (B, N, dim) tokens."""
        if stack.shape[-2:] != (self.grid[0] * self.patch, self.grid[1] * self.patch):
            raise ValueError(f"stack spatial shape {tuple(stack.shape[-2:])} does not match encoder")
        x = self.embed(stack) + self.pos
        return x.flatten(2).transpose(1, 2)


def encode_masks(stack: BoxMaskStack, encoder: MaskEncoder) -> torch.Tensor:
    """Deterministic token sequence (N, dim) for one mask stack."""
    with torch.no_grad():
        x = torch.from_numpy(np.asarray(stack.masks, dtype=np.float32))[None]
        return encoder(x)[0]


def ego_feature(ego: EgoState) -> np.ndarray:
    """(19,) vector: dynamics plus the ego-to-global transform, row-major."""
    return np.concatenate(
        [
            [ego.speed, ego.acceleration, ego.steering_angle],
            ego.ego2glb.matrix.ravel(),
        ]
    )


def relpose_vector(e_rel: Pose) -> np.ndarray:
    """(16,) row-major flattening of the relative sensor transform."""
    return e_rel.matrix.ravel().copy()
