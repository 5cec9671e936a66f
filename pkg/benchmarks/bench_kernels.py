#!/usr/bin/env python3
"""Benchmark the compiled kernels against the numpy fallback.

Run from the repo root after building the extension:

    python3 benchmarks/bench_kernels.py
"""

import time

import numpy as np

from lidarloop._kernels import _fallback

try:
    from lidarloop._kernels import _native
except ImportError:
    _native = None


def timeit(fn, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_nn(n_query, n_ref, seed=0):
    rng = np.random.default_rng(seed)
    q = rng.uniform(-60, 60, (n_query, 3))
    r = rng.uniform(-60, 60, (n_ref, 3))
    rows = []
    t_py = timeit(lambda: _fallback.nn_sqdist(q, r))
    rows.append(("python", t_py))
    if _native is not None:
        t_cy = timeit(lambda: _native.nn_sqdist(q, r))
        rows.append(("native", t_cy))
        a = _fallback.nn_sqdist(q, r)
        b = _native.nn_sqdist(q, r)
        assert np.abs(a - b).max() < 1e-9, "backends disagree"
    return rows


def bench_raycast(n_rays, n_boxes, seed=1):
    rng = np.random.default_rng(seed)
    origins = rng.uniform(-5, 5, (n_rays, 3))
    origins[:, 2] = rng.uniform(1.0, 3.0, n_rays)
    dirs = rng.normal(size=(n_rays, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    boxes = []
    for _ in range(n_boxes):
        c = rng.uniform(-30, 30, 3)
        c[2] = rng.uniform(0.5, 4.0)
        yaw = rng.uniform(0, np.pi)
        cy, sy = np.cos(yaw), np.sin(yaw)
        rot = np.array([[cy, -sy, 0], [sy, cy, 0], [0, 0, 1]])
        boxes.append(np.concatenate([c, rot.ravel(), rng.uniform(0.5, 4.0, 3)]))
    boxes = np.asarray(boxes)
    rows = [("python", timeit(lambda: _fallback.raycast(origins, dirs, boxes, True)))]
    if _native is not None:
        rows.append(("native", timeit(lambda: _native.raycast(origins, dirs, boxes, True))))
    return rows


def report(title, rows):
    print(f"\n{title}")
    base = rows[0][1]
    for name, t in rows:
        print(f"  {name:8s} {t * 1e3:10.2f} ms   x{base / t:6.2f}")


def main():
    if _native is None:
        print("note: compiled kernels not built; showing fallback only")
    report("nearest-neighbor sqdist, 50k queries vs 50k refs", bench_nn(50_000, 50_000))
    report("nearest-neighbor sqdist, 200k queries vs 100k refs", bench_nn(200_000, 100_000))
    report("raycast, 32x1024 rays vs 32 boxes + ground", bench_raycast(32 * 1024, 32))
    report("raycast, 128k rays vs 64 boxes + ground", bench_raycast(128_000, 64))


if __name__ == "__main__":
    main()
