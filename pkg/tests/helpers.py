"""Shared generators for tests: on-beam synthetic clouds and beam tables."""

import numpy as np

from lidarloop.rangeview import BeamTable
from lidarloop.scenemodel import PointCloud


def random_beam_table(rng, rows=8, phi_lo=-0.30, phi_step=0.05, h_max=0.30):
    """Beam table with well-separated elevations and small origin heights.

    Raw-elevation banding needs |h| / r_min below the elevation separation,
    so heights stay in [0, h_max] and jitter is small.
    """
    phi = phi_lo + phi_step * np.arange(rows) + rng.uniform(-0.01, 0.01, rows)
    h = rng.uniform(0.0, h_max, rows)
    return BeamTable(h, phi)


def beam_cloud(beams, rng, per_row=400, r_range=(15.0, 50.0), rows=None):
    """Points sampled exactly on the beam geometry with random range/azimuth."""
    rows = range(beams.rows) if rows is None else rows
    pts = []
    for j in rows:
        r = rng.uniform(*r_range, per_row)
        theta = rng.uniform(-np.pi, np.pi, per_row)
        phi = beams.elevations[j]
        h = beams.heights[j]
        x = r * np.cos(phi) * np.cos(theta)
        y = r * np.cos(phi) * np.sin(theta)
        z = r * np.sin(phi) + h
        pts.append(np.stack([x, y, z], axis=1))
    xyz = np.concatenate(pts, axis=0)
    return PointCloud(xyz, rng.uniform(0.0, 1.0, xyz.shape[0]))


def pixel_of(xyz, beams, width):
    """Independent restatement of the forward pixel map, for survivor oracles."""
    z_off = xyz[:, 2][:, None] - beams.heights[None, :]
    r = np.sqrt(xyz[:, 0] ** 2 + xyz[:, 1] ** 2 + z_off.T**2).T
    elev = np.arcsin(np.clip(z_off / np.maximum(r, 1e-300), -1, 1))
    row = np.abs(elev - beams.elevations[None, :]).argmin(axis=1)
    theta = np.arctan2(xyz[:, 1], xyz[:, 0])
    u = np.floor(width - (theta + np.pi) / (2 * np.pi) * width).astype(np.int64) % width
    v = beams.rows - 1 - row
    return v, u, r[np.arange(len(xyz)), row]


def survivors(xyz, beams, width):
    """Index of the nearest-return winner for every occupied pixel."""
    v, u, r = pixel_of(xyz, beams, width)
    best = {}
    for i in range(len(xyz)):
        key = (v[i], u[i])
        if key not in best or r[i] < r[best[key]]:
            best[key] = i
    return np.array(sorted(best.values())), r
