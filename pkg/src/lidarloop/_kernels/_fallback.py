"""Pure-numpy implementations of the hot kernels.

Semantics are identical to the compiled twin in ``_native.pyx``; the
dispatcher in ``__init__`` picks whichever is importable.
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"

_EPS = 1e-9


def _nn_sqdist_brute(query: np.ndarray, ref: np.ndarray) -> np.ndarray:
    out = np.empty(query.shape[0], dtype=np.float64)
    chunk = max(1, int(4_000_000 // max(ref.shape[0], 1)))
    for lo in range(0, query.shape[0], chunk):
        hi = min(lo + chunk, query.shape[0])
        d = query[lo:hi, None, :] - ref[None, :, :]
        out[lo:hi] = np.einsum("ijk,ijk->ij", d, d).min(axis=1)
    return out


def nn_sqdist(query: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """Exact min squared euclidean distance from each query point to a ref set.

    Small inputs take a chunked dense path; larger ones use the same uniform
    grid + expanding-shell search as the compiled kernel, vectorized over
    query cells. Both are exact.

    Args:
        query: (N, 3) float64.
        ref: (M, 3) float64, M >= 1.

    Returns:
        (N,) float64 of min_j ||query_i - ref_j||^2.
    """
    query = np.ascontiguousarray(query, dtype=np.float64)
    ref = np.ascontiguousarray(ref, dtype=np.float64)
    n, m = query.shape[0], ref.shape[0]
    if m == 0:
        raise ValueError("reference set is empty")
    if n == 0:
        return np.empty(0, dtype=np.float64)
    if n * m <= 20_000_000:
        return _nn_sqdist_brute(query, ref)
    return _nn_sqdist_grid(query, ref)


def _nn_sqdist_grid(query: np.ndarray, ref: np.ndarray) -> np.ndarray:
    n, m = query.shape[0], ref.shape[0]
    lo = ref.min(axis=0)
    ext = float((ref.max(axis=0) - lo).max())
    n_target = min(128, int((m / 2.0) ** (1.0 / 3.0)) + 1)
    h = ext / n_target
    if h <= 0:
        h = 1.0
    dims = np.minimum((ref.max(axis=0) - lo) / h, 1e9).astype(np.int64) + 1
    nx, ny, nz = (int(v) for v in dims)

    ref_cell = np.minimum(((ref - lo) / h).astype(np.int64), dims - 1)
    ref_id = ref_cell[:, 0] + nx * (ref_cell[:, 1] + ny * ref_cell[:, 2])
    order = np.argsort(ref_id, kind="stable")
    sorted_ids = ref_id[order]
    starts = np.searchsorted(sorted_ids, np.arange(nx * ny * nz + 1))

    def cell_points(cx, cy, cz) -> np.ndarray:
        cid = cx + nx * (cy + ny * cz)
        return order[starts[cid] : starts[cid + 1]]

    q_cell = np.floor((query - lo) / h).astype(np.int64)
    out = np.full(n, np.inf)
    # group queries sharing a cell so shells are gathered once per cell
    uniq, inverse = np.unique(q_cell, axis=0, return_inverse=True)
    for u_idx in range(uniq.shape[0]):
        qi = np.flatnonzero(inverse == u_idx)
        qx, qy, qz = (int(v) for v in uniq[u_idx])
        pts = query[qi]
        best = np.full(qi.size, np.inf)
        smax = max(
            qx, nx - 1 - qx, qy, ny - 1 - qy, qz, nz - 1 - qz, 0
        )
        for s in range(smax + 1):
            cand: list[np.ndarray] = []
            for cx in range(max(qx - s, 0), min(qx + s, nx - 1) + 1):
                for cy in range(max(qy - s, 0), min(qy + s, ny - 1) + 1):
                    for cz in range(max(qz - s, 0), min(qz + s, nz - 1) + 1):
                        if s > 0 and (
                            cx != qx - s and cx != qx + s
                            and cy != qy - s and cy != qy + s
                            and cz != qz - s and cz != qz + s
                        ):
                            continue  # interior cell, already scanned
                        ids = cell_points(cx, cy, cz)
                        if ids.size:
                            cand.append(ids)
            if cand:
                rr = ref[np.concatenate(cand)]
                d = pts[:, None, :] - rr[None, :, :]
                best = np.minimum(best, np.einsum("ijk,ijk->ij", d, d).min(axis=1))
            # points in farther shells are at least s*h away
            if (best <= (s * h) ** 2).all():
                break
        out[qi] = best
    return out


def raycast(
    origins: np.ndarray,
    dirs: np.ndarray,
    boxes: np.ndarray,
    ground: bool,
) -> tuple[np.ndarray, np.ndarray]:
    """First-surface intersection of rays against a ground plane and OBBs.

    Args:
        origins: (K, 3) ray origins, world frame.
        dirs: (K, 3) unit ray directions.
        boxes: (B, 15) rows of [center(3), rotation row-major(9), half-extents(3)].
        ground: whether the infinite plane z=0 participates.

    Returns:
        (t, code): t is (K,) float64 hit distance (inf = no hit); code is
        (K,) int32 with -1 = none, 0 = ground, i >= 1 = box i-1.
    """
    origins = np.ascontiguousarray(origins, dtype=np.float64)
    dirs = np.ascontiguousarray(dirs, dtype=np.float64)
    k = origins.shape[0]
    best_t = np.full(k, np.inf)
    best_code = np.full(k, -1, dtype=np.int32)

    if ground:
        dz = dirs[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = -origins[:, 2] / dz
        ok = (np.abs(dz) > _EPS) & (t > _EPS)
        hit = ok & (t < best_t)
        best_t[hit] = t[hit]
        best_code[hit] = 0

    for b in range(boxes.shape[0]):
        center = boxes[b, 0:3]
        rot = boxes[b, 3:12].reshape(3, 3)
        half = boxes[b, 12:15]
        # slab test in the box frame
        o = (origins - center) @ rot
        d = dirs @ rot
        t_lo = np.full(k, -np.inf)
        t_hi = np.full(k, np.inf)
        miss = np.zeros(k, dtype=bool)
        for ax in range(3):
            da = d[:, ax]
            oa = o[:, ax]
            par = np.abs(da) <= _EPS
            miss |= par & (np.abs(oa) > half[ax])
            with np.errstate(divide="ignore", invalid="ignore"):
                t1 = (-half[ax] - oa) / da
                t2 = (half[ax] - oa) / da
            lo = np.where(par, -np.inf, np.minimum(t1, t2))
            hi = np.where(par, np.inf, np.maximum(t1, t2))
            t_lo = np.maximum(t_lo, lo)
            t_hi = np.minimum(t_hi, hi)
        # entry point, or exit if the origin is inside the box
        t = np.where(t_lo > _EPS, t_lo, t_hi)
        ok = ~miss & (t_hi >= np.maximum(t_lo, 0.0)) & (t > _EPS)
        hit = ok & (t < best_t)
        best_t[hit] = t[hit]
        best_code[hit] = b + 1

    return best_t, best_code
