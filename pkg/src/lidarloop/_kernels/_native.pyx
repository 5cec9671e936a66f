# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels: grid-accelerated nearest neighbor and ray casting.

Semantics match ``_fallback`` exactly; the tests assert equivalence.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, fabs, sqrt, floor

BACKEND = "native"

cdef double _EPS = 1e-9


def nn_sqdist(query, ref):
    """Exact min squared distance from each query point to the ref set.

    Uses a uniform grid over the ref points with an expanding-shell search,
    which is exact: the search stops only once the best distance beats the
    minimum possible distance of the next shell.
    """
    cdef cnp.ndarray[cnp.float64_t, ndim=2] q = np.ascontiguousarray(query, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] r = np.ascontiguousarray(ref, dtype=np.float64)
    cdef Py_ssize_t n = q.shape[0], m = r.shape[0]
    out_arr = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = out_arr
    if n == 0:
        return out_arr
    if m == 0:
        raise ValueError("reference set is empty")

    cdef double lo0 = r[:, 0].min(), lo1 = r[:, 1].min(), lo2 = r[:, 2].min()
    cdef double hi0 = r[:, 0].max(), hi1 = r[:, 1].max(), hi2 = r[:, 2].max()
    cdef double ext = max(hi0 - lo0, max(hi1 - lo1, hi2 - lo2))
    cdef long n_target = <long>((m / 2.0) ** (1.0 / 3.0)) + 1
    if n_target > 128:
        n_target = 128
    cdef double h = ext / n_target
    if h <= 0:
        h = 1.0
    cdef long nx = <long>((hi0 - lo0) / h) + 1
    cdef long ny = <long>((hi1 - lo1) / h) + 1
    cdef long nz = <long>((hi2 - lo2) / h) + 1

    # CSR bucketing of ref points by cell id
    ids_np = (
        np.minimum(((r[:, 0] - lo0) / h).astype(np.int64), nx - 1)
        + nx * (
            np.minimum(((r[:, 1] - lo1) / h).astype(np.int64), ny - 1)
            + ny * np.minimum(((r[:, 2] - lo2) / h).astype(np.int64), nz - 1)
        )
    )
    order_np = np.argsort(ids_np, kind="stable")
    sorted_ids_np = ids_np[order_np]
    starts_np = np.searchsorted(sorted_ids_np, np.arange(nx * ny * nz + 1))
    cdef cnp.ndarray[cnp.int64_t, ndim=1] order = np.ascontiguousarray(order_np, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] starts = np.ascontiguousarray(starts_np, dtype=np.int64)

    cdef Py_ssize_t i, k
    cdef long qx, qy, qz, s, smax, cx, cy, cz, cell
    cdef long sx0, sx1, sy0, sy1, sz0, sz1
    cdef double best, d0, d1, d2, dd, qv0, qv1, qv2
    cdef long p0, p1, pi

    for i in range(n):
        qv0 = q[i, 0]; qv1 = q[i, 1]; qv2 = q[i, 2]
        qx = <long>floor((qv0 - lo0) / h)
        qy = <long>floor((qv1 - lo1) / h)
        qz = <long>floor((qv2 - lo2) / h)
        smax = 0
        if qx > smax: smax = qx
        if nx - 1 - qx > smax: smax = nx - 1 - qx
        if qy > smax: smax = qy
        if ny - 1 - qy > smax: smax = ny - 1 - qy
        if qz > smax: smax = qz
        if nz - 1 - qz > smax: smax = nz - 1 - qz
        best = INFINITY
        s = 0
        while s <= smax:
            # scan all grid cells at Chebyshev cell-distance s from (qx,qy,qz)
            sx0 = qx - s; sx1 = qx + s
            sy0 = qy - s; sy1 = qy + s
            sz0 = qz - s; sz1 = qz + s
            for cx in range(sx0, sx1 + 1):
                if cx < 0 or cx >= nx:
                    continue
                for cy in range(sy0, sy1 + 1):
                    if cy < 0 or cy >= ny:
                        continue
                    for cz in range(sz0, sz1 + 1):
                        if cz < 0 or cz >= nz:
                            continue
                        if s > 0 and (cx != sx0 and cx != sx1 and
                                      cy != sy0 and cy != sy1 and
                                      cz != sz0 and cz != sz1):
                            continue  # interior cell, already scanned
                        cell = cx + nx * (cy + ny * cz)
                        p0 = starts[cell]; p1 = starts[cell + 1]
                        for pi in range(p0, p1):
                            k = order[pi]
                            d0 = qv0 - r[k, 0]
                            d1 = qv1 - r[k, 1]
                            d2 = qv2 - r[k, 2]
                            dd = d0 * d0 + d1 * d1 + d2 * d2
                            if dd < best:
                                best = dd
            # points in shells > s are at least s*h away from the query
            if best <= (s * h) * (s * h):
                break
            s += 1
        out[i] = best
    return out_arr


def raycast(origins, dirs, boxes, ground):
    """First-surface intersection against a z=0 plane and oriented boxes.

    Returns (t, code) with t = hit distance (inf for none) and code -1 for
    none, 0 for ground, i >= 1 for box i-1.
    """
    cdef cnp.ndarray[cnp.float64_t, ndim=2] o = np.ascontiguousarray(origins, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] d = np.ascontiguousarray(dirs, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] bx = np.ascontiguousarray(boxes, dtype=np.float64).reshape(-1, 15)
    cdef Py_ssize_t k = o.shape[0], nb = bx.shape[0]
    cdef bint use_ground = bool(ground)

    t_arr = np.full(k, np.inf, dtype=np.float64)
    code_arr = np.full(k, -1, dtype=np.int32)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] best_t = t_arr
    cdef cnp.ndarray[cnp.int32_t, ndim=1] best_code = code_arr

    cdef Py_ssize_t i, b, ax
    cdef double t, dz, ol0, ol1, ol2, dl0, dl1, dl2
    cdef double t_lo, t_hi, t1, t2, lo, hi, oa, da, half
    cdef bint miss

    for i in range(k):
        if use_ground:
            dz = d[i, 2]
            if fabs(dz) > _EPS:
                t = -o[i, 2] / dz
                if t > _EPS and t < best_t[i]:
                    best_t[i] = t
                    best_code[i] = 0
        for b in range(nb):
            # into the box frame: columns of the rotation are the box axes
            ol0 = ((o[i, 0] - bx[b, 0]) * bx[b, 3] + (o[i, 1] - bx[b, 1]) * bx[b, 6]
                   + (o[i, 2] - bx[b, 2]) * bx[b, 9])
            ol1 = ((o[i, 0] - bx[b, 0]) * bx[b, 4] + (o[i, 1] - bx[b, 1]) * bx[b, 7]
                   + (o[i, 2] - bx[b, 2]) * bx[b, 10])
            ol2 = ((o[i, 0] - bx[b, 0]) * bx[b, 5] + (o[i, 1] - bx[b, 1]) * bx[b, 8]
                   + (o[i, 2] - bx[b, 2]) * bx[b, 11])
            dl0 = d[i, 0] * bx[b, 3] + d[i, 1] * bx[b, 6] + d[i, 2] * bx[b, 9]
            dl1 = d[i, 0] * bx[b, 4] + d[i, 1] * bx[b, 7] + d[i, 2] * bx[b, 10]
            dl2 = d[i, 0] * bx[b, 5] + d[i, 1] * bx[b, 8] + d[i, 2] * bx[b, 11]
            t_lo = -INFINITY
            t_hi = INFINITY
            miss = False
            for ax in range(3):
                if ax == 0:
                    oa = ol0; da = dl0
                elif ax == 1:
                    oa = ol1; da = dl1
                else:
                    oa = ol2; da = dl2
                half = bx[b, 12 + ax]
                if fabs(da) <= _EPS:
                    if fabs(oa) > half:
                        miss = True
                        break
                    continue
                t1 = (-half - oa) / da
                t2 = (half - oa) / da
                if t1 < t2:
                    lo = t1; hi = t2
                else:
                    lo = t2; hi = t1
                if lo > t_lo: t_lo = lo
                if hi < t_hi: t_hi = hi
            if miss:
                continue
            t = t_lo if t_lo > _EPS else t_hi
            if t_hi >= (t_lo if t_lo > 0.0 else 0.0) and t > _EPS and t < best_t[i]:
                best_t[i] = t
                best_code[i] = <int>(b + 1)
    return t_arr, code_arr
