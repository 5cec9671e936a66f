"""Evaluation suite: Chamfer distance, per-ray depth errors, and
distributional distances (MMD, JSD) over bird's-eye-view histograms.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from lidarloop import _kernels
from lidarloop.rangeview import RangeImage
from lidarloop.scenemodel import PointCloud


def chamfer(a: PointCloud, b: PointCloud) -> float:
    """Sum of both directional means of squared nearest-neighbor distances (m^2)."""
    if len(a) == 0 or len(b) == 0:
        raise ValueError("chamfer distance needs two non-empty clouds")
    d_ab = _kernels.nn_sqdist(a.xyz, b.xyz)
    d_ba = _kernels.nn_sqdist(b.xyz, a.xyz)
    return float(d_ab.mean() + d_ba.mean())


def ray_errors(gen: RangeImage, gt: RangeImage) -> tuple[float, float]:
    """Per-ray L1 (meters) and AbsRel (percent) over occupied gt pixels.

    Generated pixels that are empty where the gt is occupied count as a
    full miss at r_max.
    """
    if gen.shape != gt.shape:
        raise ValueError(f"shape mismatch: {gen.shape} vs {gt.shape}")
    if gen.r_max != gt.r_max:
        raise ValueError(f"r_max mismatch: {gen.r_max} vs {gt.r_max}")
    occ = gt.occupied()
    if not occ.any():
        raise ValueError("ground-truth image has no occupied pixels")
    r_gt = gt.ranges_m()[occ]
    r_gen = gen.ranges_m()[occ]
    r_gen = np.where(gen.occupied()[occ], r_gen, gt.r_max)
    err = np.abs(r_gen - r_gt)
    l1 = float(err.mean())
    absrel = float((err / r_gt).mean() * 100.0)
    return l1, absrel


@dataclass(frozen=True)
class BEVHistogram:
    """G x G occupancy counts over [-extent, extent]^2 in x, y."""

    counts: np.ndarray
    extent: float

    def __post_init__(self) -> None:
        c = np.asarray(self.counts, dtype=np.float64)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError("histogram must be square")
        if (c < 0).any():
            raise ValueError("histogram entries must be nonnegative")
        c = np.array(c, copy=True)
        c.flags.writeable = False
        object.__setattr__(self, "counts", c)

    def normalized(self) -> np.ndarray:
        total = self.counts.sum()
        if total <= 0:
            raise ValueError("cannot normalize an empty histogram")
        return self.counts / total


def bev_histogram(cloud: PointCloud, grid: int = 100, extent: float = 50.0) -> BEVHistogram:
    """Top-down occupancy histogram of a cloud."""
    x, y = cloud.xyz[:, 0], cloud.xyz[:, 1]
    keep = (np.abs(x) < extent) & (np.abs(y) < extent)
    h, _, _ = np.histogram2d(
        x[keep], y[keep], bins=grid, range=[[-extent, extent], [-extent, extent]]
    )
    return BEVHistogram(h, extent)


def jsd(p: BEVHistogram, q: BEVHistogram) -> float:
    """Jensen-Shannon divergence in bits between normalized histograms."""
    if p.counts.shape != q.counts.shape:
        raise ValueError("histogram shapes differ")
    pn = p.normalized().ravel()
    qn = q.normalized().ravel()
    m = 0.5 * (pn + qn)

    def kl_bits(a, b):
        mask = a > 0
        return float((a[mask] * np.log2(a[mask] / b[mask])).sum())

    return 0.5 * kl_bits(pn, m) + 0.5 * kl_bits(qn, m)


def mmd(gen_hists: Sequence[BEVHistogram], real_hists: Sequence[BEVHistogram]) -> float:
    """Gaussian-kernel MMD between two lists of per-scan histograms.

    Unbiased estimator over flattened normalized histograms; the kernel
    bandwidth follows the median pairwise distance heuristic over the
    pooled samples. Returns sqrt(max(MMD^2, 0)).
    """
    if not gen_hists or not real_hists:
        raise ValueError("both histogram lists must be non-empty")
    shapes = {h.counts.shape for h in list(gen_hists) + list(real_hists)}
    if len(shapes) != 1:
        raise ValueError("histogram shapes differ")
    x = np.stack([h.normalized().ravel() for h in gen_hists])
    y = np.stack([h.normalized().ravel() for h in real_hists])
    pooled = np.concatenate([x, y], axis=0)
    d2 = ((pooled[:, None, :] - pooled[None, :, :]) ** 2).sum(-1)
    off_diag = d2[~np.eye(len(pooled), dtype=bool)]
    sigma2 = float(np.median(off_diag))
    if sigma2 <= 0:
        sigma2 = 1.0

    def kernel(a, b):
        dd = ((a[:, None, :] - b[None, :, :]) ** 2).sum(-1)
        return np.exp(-dd / (2.0 * sigma2))

    kxx = kernel(x, x)
    kyy = kernel(y, y)
    kxy = kernel(x, y)
    n, m = len(x), len(y)
    term_x = (kxx.sum() - np.trace(kxx)) / (n * (n - 1)) if n > 1 else 0.0
    term_y = (kyy.sum() - np.trace(kyy)) / (m * (m - 1)) if m > 1 else 0.0
    mmd2 = term_x + term_y - 2.0 * kxy.mean()
    return float(np.sqrt(max(mmd2, 0.0)))


@dataclass(frozen=True)
class HorizonRow:
    horizon_s: float
    chamfer_m2: float
    l1_m: float | None = None
    absrel_pct: float | None = None


@dataclass(frozen=True)
class HorizonReport:
    rows: tuple[HorizonRow, ...]

    def __post_init__(self) -> None:
        rows = tuple(self.rows)
        horizons = [r.horizon_s for r in rows]
        if horizons != sorted(horizons):
            raise ValueError("horizons must be ascending")
        object.__setattr__(self, "rows", rows)

    def as_records(self) -> list[dict]:
        return [
            {
                "horizon": r.horizon_s,
                "cd": r.chamfer_m2,
                "l1": r.l1_m,
                "absrel": r.absrel_pct,
            }
            for r in self.rows
        ]

    def table(self) -> str:
        lines = [f"{'horizon[s]':>10}  {'CD[m^2]':>10}  {'L1[m]':>10}  {'AbsRel[%]':>10}"]
        for r in self.rows:
            l1 = f"{r.l1_m:10.4f}" if r.l1_m is not None else " " * 10
            ar = f"{r.absrel_pct:10.4f}" if r.absrel_pct is not None else " " * 10
            lines.append(f"{r.horizon_s:10.1f}  {r.chamfer_m2:10.4f}  {l1}  {ar}")
        return "\n".join(lines)


def eval_sequence(
    gen: Sequence[PointCloud],
    gt: Sequence[PointCloud],
    cadence_s: float,
    gen_images: Sequence[RangeImage] | None = None,
    gt_images: Sequence[RangeImage] | None = None,
    start_horizon_s: float = 0.0,
) -> HorizonReport:
    """Per-frame report keyed by horizon = start + index * cadence."""
    if len(gen) != len(gt):
        raise ValueError(f"length mismatch: {len(gen)} generated vs {len(gt)} truth")
    rows = []
    for i, (g, t) in enumerate(zip(gen, gt)):
        l1 = absrel = None
        if gen_images is not None and gt_images is not None:
            l1, absrel = ray_errors(gen_images[i], gt_images[i])
        rows.append(
            HorizonRow(
                horizon_s=start_horizon_s + i * cadence_s,
                chamfer_m2=chamfer(g, t),
                l1_m=l1,
                absrel_pct=absrel,
            )
        )
    return HorizonReport(tuple(rows))
