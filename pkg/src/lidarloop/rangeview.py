"""Reversible conversion between point clouds and two-channel range images.

The forward map uses the corrected spherical parameterization: each image
row j has its own ray origin height h_j and fixed elevation phi_j, so

    r = sqrt(x^2 + y^2 + (z - h_j)^2),  theta = atan2(y, x)

and pixel coordinates follow u = floor(W - ((theta + pi) / 2pi) * W) mod W,
v = H - 1 - j. Unprojection evaluates rays at pixel centers, which makes
project(unproject(img)) reproduce img bit-for-bit on occupied pixels.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import BinaryIO, Sequence

import numpy as np

from lidarloop.scenemodel import PointCloud

_MAGIC = b"LGRI"
_MIN_RANGE = 1e-9


@dataclass(frozen=True)
class BeamTable:
    """Per-row ray geometry: origin height h_j and elevation phi_j."""

    heights: np.ndarray     # (H,) float64, meters
    elevations: np.ndarray  # (H,) float64, radians, strictly monotonic

    def __post_init__(self) -> None:
        h = np.asarray(self.heights, dtype=np.float64).reshape(-1)
        phi = np.asarray(self.elevations, dtype=np.float64).reshape(-1)
        if h.shape != phi.shape or h.size < 1:
            raise ValueError("heights and elevations must be equal-length, non-empty")
        d = np.diff(phi)
        if d.size and not ((d > 0).all() or (d < 0).all()):
            raise ValueError("elevations must be strictly monotonic across rows")
        for a in (h, phi):
            a = np.array(a, copy=True)
        h = np.array(h, copy=True); h.flags.writeable = False
        phi = np.array(phi, copy=True); phi.flags.writeable = False
        object.__setattr__(self, "heights", h)
        object.__setattr__(self, "elevations", phi)

    @property
    def rows(self) -> int:
        return self.heights.size

    @classmethod
    def uniform(cls, rows: int, phi_min: float, phi_max: float, height: float = 0.0) -> "BeamTable":
        phi = np.linspace(phi_min, phi_max, rows)
        return cls(np.full(rows, height), phi)


@dataclass(frozen=True)
class RangeImage:
    """Two-channel (depth, intensity) grid; 0 depth marks an empty pixel."""

    depth: np.ndarray      # (H, W) float32 in [0, 1]
    intensity: np.ndarray  # (H, W) float32 in [0, 1]
    r_max: float
    log_depth: bool = False  # alternative log1p(r)/log1p(r_max) normalization

    def __post_init__(self) -> None:
        d = np.asarray(self.depth, dtype=np.float32)
        i = np.asarray(self.intensity, dtype=np.float32)
        if d.ndim != 2 or d.shape != i.shape:
            raise ValueError("depth and intensity must be equal-shape 2D arrays")
        if d.size and (d.min() < 0 or d.max() > 1 or i.min() < 0 or i.max() > 1):
            raise ValueError("range image channels must lie in [0, 1]")
        if ((d == 0) & (i != 0)).any():
            raise ValueError("empty pixels must have zero intensity")
        if not (self.r_max > 0):
            raise ValueError("r_max must be positive")
        d = np.array(d, copy=True); d.flags.writeable = False
        i = np.array(i, copy=True); i.flags.writeable = False
        object.__setattr__(self, "depth", d)
        object.__setattr__(self, "intensity", i)

    @property
    def shape(self) -> tuple[int, int]:
        return self.depth.shape

    @classmethod
    def empty(cls, height: int, width: int, r_max: float, log_depth: bool = False) -> "RangeImage":
        z = np.zeros((height, width), dtype=np.float32)
        return cls(z, z.copy(), r_max, log_depth)

    def occupied(self) -> np.ndarray:
        return self.depth > 0

    def ranges_m(self) -> np.ndarray:
        """Per-pixel range in meters (0 where empty)."""
        d = self.depth.astype(np.float64)
        if self.log_depth:
            r = np.expm1(d * np.log1p(self.r_max))
        else:
            r = d * self.r_max
        r[~self.occupied()] = 0.0
        return r


def _normalize_range(r: np.ndarray, r_max: float, log_depth: bool) -> np.ndarray:
    if log_depth:
        return np.clip(np.log1p(np.clip(r, 0.0, r_max)) / np.log1p(r_max), 0.0, 1.0)
    return np.clip(r / r_max, 0.0, 1.0)


def _per_row_geometry(xyz: np.ndarray, beams: BeamTable) -> tuple[np.ndarray, np.ndarray]:
    """Range and elevation of every point against every row origin."""
    z_off = xyz[:, 2][:, None] - beams.heights[None, :]          # (N, H)
    horiz = xyz[:, 0] ** 2 + xyz[:, 1] ** 2                      # (N,)
    r = np.sqrt(horiz[:, None] + z_off**2)
    with np.errstate(invalid="ignore", divide="ignore"):
        elev = np.arcsin(np.clip(np.where(r > 0, z_off / r, 0.0), -1.0, 1.0))
    return r, elev


def project(
    cloud: PointCloud,
    beams: BeamTable,
    width: int,
    r_max: float = 80.0,
    log_depth: bool = False,
) -> RangeImage:
    """Spherically project a cloud onto an (H, W) range image.

    Each point goes to the row whose elevation is nearest, computed about
    that row's own origin; pixel collisions keep the nearest return.
    """
    height = beams.rows
    depth = np.zeros((height, width), dtype=np.float32)
    inten = np.zeros((height, width), dtype=np.float32)
    if len(cloud) == 0:
        return RangeImage(depth, inten, r_max, log_depth)

    xyz = cloud.xyz
    r_all, elev_all = _per_row_geometry(xyz, beams)
    row = np.abs(elev_all - beams.elevations[None, :]).argmin(axis=1)
    r = r_all[np.arange(len(cloud)), row]

    theta = np.arctan2(xyz[:, 1], xyz[:, 0])
    u = np.floor(width - (theta + np.pi) / (2.0 * np.pi) * width).astype(np.int64) % width
    v = height - 1 - row

    d32 = _normalize_range(r, r_max, log_depth).astype(np.float32)
    keep = (r > _MIN_RANGE) & (d32 > 0)
    # nearest wins: write in descending range order so the smallest lands last
    order = np.argsort(-r[keep], kind="stable")
    vi, ui = v[keep][order], u[keep][order]
    depth[vi, ui] = d32[keep][order]
    inten[vi, ui] = cloud.intensity[keep][order].astype(np.float32)
    return RangeImage(depth, inten, r_max, log_depth)


def unproject(img: RangeImage, beams: BeamTable) -> PointCloud:
    """Rebuild the point cloud from every occupied pixel (at pixel centers)."""
    height, width = img.shape
    if beams.rows != height:
        raise ValueError(f"beam table has {beams.rows} rows, image has {height}")
    v, u = np.nonzero(img.occupied())
    if v.size == 0:
        return PointCloud.empty()
    j = height - 1 - v
    theta = np.pi - 2.0 * np.pi * (u + 0.5) / width
    r = img.ranges_m()[v, u]
    phi = beams.elevations[j]
    h = beams.heights[j]
    cos_phi = np.cos(phi)
    xyz = np.stack(
        [r * cos_phi * np.cos(theta), r * cos_phi * np.sin(theta), r * np.sin(phi) + h],
        axis=1,
    )
    return PointCloud(xyz, img.intensity[v, u].astype(np.float64))


# ---------------------------------------------------------------------------
# Hough beam calibration


@dataclass(frozen=True)
class HoughConfig:
    height_bins: int = 64
    elev_bins: int = 256
    height_range: tuple[float, float] = (-1.0, 4.0)
    elev_range: tuple[float, float] = (-0.6, 0.2)


def hough_calibrate(
    clouds: Sequence[PointCloud],
    rows: int,
    config: HoughConfig = HoughConfig(),
) -> BeamTable:
    """Recover per-row (h_j, phi_j) from raw scans by Hough voting.

    Points are split into `rows` quantile bands of raw elevation (computed
    with h = 0); each band votes over a (height, elevation) accumulator for
    the pair satisfying z - h = sin(phi) * r, and the winning cell is
    refined by the mean of its votes.
    """
    if not clouds:
        raise ValueError("need at least one cloud to calibrate")
    xyz = np.concatenate([c.xyz for c in clouds if len(c)], axis=0)
    if xyz.shape[0] == 0:
        raise ValueError("calibration clouds are empty")

    norm = np.linalg.norm(xyz, axis=1)
    ok = norm > _MIN_RANGE
    xyz, norm = xyz[ok], norm[ok]
    raw_elev = np.arcsin(np.clip(xyz[:, 2] / norm, -1.0, 1.0))

    edges = np.quantile(raw_elev, np.arange(1, rows) / rows)
    band = np.searchsorted(edges, raw_elev, side="right")

    h_lo, h_hi = config.height_range
    p_lo, p_hi = config.elev_range
    h_centers = h_lo + (np.arange(config.height_bins) + 0.5) * (h_hi - h_lo) / config.height_bins
    p_width = (p_hi - p_lo) / config.elev_bins

    empty = [j for j in range(rows) if not (band == j).any()]
    if empty:
        raise ValueError(f"no points landed in row(s) {empty}")

    heights = np.empty(rows)
    elevations = np.empty(rows)
    for j in range(rows):
        pts = xyz[band == j]
        horiz = pts[:, 0] ** 2 + pts[:, 1] ** 2
        # (P, Hbins) implied elevation for every candidate height
        z_off = pts[:, 2][:, None] - h_centers[None, :]
        r = np.sqrt(horiz[:, None] + z_off**2)
        with np.errstate(invalid="ignore", divide="ignore"):
            phi = np.arcsin(np.clip(np.where(r > 0, z_off / r, 0.0), -1.0, 1.0))
        p_bin = np.floor((phi - p_lo) / p_width).astype(np.int64)
        valid = (p_bin >= 0) & (p_bin < config.elev_bins)
        h_idx = np.broadcast_to(np.arange(config.height_bins), phi.shape)
        acc = np.zeros((config.height_bins, config.elev_bins), dtype=np.int64)
        np.add.at(acc, (h_idx[valid], p_bin[valid]), 1)
        if acc.max() == 0:
            raise ValueError(f"row {j}: no votes landed inside the accumulator domain")
        hb, pb = np.unravel_index(acc.argmax(), acc.shape)
        in_cell = valid & (h_idx == hb) & (p_bin == pb)
        heights[j] = h_centers[hb]
        elevations[j] = phi[in_cell].mean()
    return BeamTable(heights, elevations)


# ---------------------------------------------------------------------------
# range image file format: magic "LGRI", u16 H, u16 W, f32 r_max,
# H*W f32 depth row-major, H*W f32 intensity, little-endian


def write_range_image(img: RangeImage, fp: BinaryIO) -> None:
    height, width = img.shape
    fp.write(struct.pack("<4sHHf", _MAGIC, height, width, float(img.r_max)))
    fp.write(np.ascontiguousarray(img.depth, dtype="<f4").tobytes())
    fp.write(np.ascontiguousarray(img.intensity, dtype="<f4").tobytes())


def read_range_image(fp: BinaryIO, log_depth: bool = False) -> RangeImage:
    head = fp.read(12)
    if len(head) != 12:
        raise ValueError("truncated range image header")
    magic, height, width, r_max = struct.unpack("<4sHHf", head)
    if magic != _MAGIC:
        raise ValueError(f"bad magic {magic!r}, expected {_MAGIC!r}")
    n = height * width * 4
    depth = np.frombuffer(fp.read(n), dtype="<f4").reshape(height, width)
    inten = np.frombuffer(fp.read(n), dtype="<f4").reshape(height, width)
    if depth.size != height * width or inten.size != height * width:
        raise ValueError("truncated range image payload")
    return RangeImage(depth, inten, float(r_max), log_depth)


def save_range_image(img: RangeImage, path) -> None:
    with open(path, "wb") as fp:
        write_range_image(img, fp)


def load_range_image(path, log_depth: bool = False) -> RangeImage:
    with open(path, "rb") as fp:
        return read_range_image(fp, log_depth)
