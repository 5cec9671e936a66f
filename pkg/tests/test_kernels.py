import numpy as np
import pytest

from lidarloop._kernels import _fallback

try:
    from lidarloop._kernels import _native
except ImportError:
    _native = None

needs_native = pytest.mark.skipif(_native is None, reason="compiled kernels not built")


def brute_nn(query, ref):
    out = np.empty(len(query))
    for i, q in enumerate(query):
        out[i] = ((ref - q) ** 2).sum(axis=1).min()
    return out


def nn_cases(rng):
    yield rng.uniform(-50, 50, (300, 3)), rng.uniform(-50, 50, (400, 3))
    # clustered refs, distant queries: stresses the shell search
    yield rng.uniform(-100, 100, (200, 3)), rng.normal(0, 0.5, (500, 3))
    # planar cloud (degenerate z extent)
    ref = rng.uniform(-30, 30, (300, 3))
    ref[:, 2] = 0.0
    yield rng.uniform(-30, 30, (100, 3)), ref
    # single reference point
    yield rng.uniform(-5, 5, (50, 3)), rng.uniform(-5, 5, (1, 3))
    # identical reference points
    yield rng.uniform(-5, 5, (50, 3)), np.tile(rng.uniform(-5, 5, (1, 3)), (20, 1))


class TestFallbackNN:
    def test_matches_brute_force(self):
        rng = np.random.default_rng(0)
        for q, r in nn_cases(rng):
            assert np.abs(_fallback.nn_sqdist(q, r) - brute_nn(q, r)).max() < 1e-9

    def test_grid_path_matches_brute_force(self):
        rng = np.random.default_rng(4)
        for q, r in nn_cases(rng):
            got = _fallback._nn_sqdist_grid(
                np.ascontiguousarray(q), np.ascontiguousarray(r)
            )
            assert np.allclose(got, brute_nn(q, r), rtol=1e-12, atol=1e-12)

    def test_empty_query(self):
        assert _fallback.nn_sqdist(np.zeros((0, 3)), np.zeros((5, 3))).shape == (0,)

    def test_empty_ref_rejected(self):
        with pytest.raises(ValueError):
            _fallback.nn_sqdist(np.zeros((2, 3)), np.zeros((0, 3)))


@needs_native
class TestNativeNN:
    def test_matches_brute_force(self):
        rng = np.random.default_rng(1)
        for q, r in nn_cases(rng):
            assert np.abs(_native.nn_sqdist(q, r) - brute_nn(q, r)).max() < 1e-9

    def test_matches_fallback(self):
        rng = np.random.default_rng(2)
        for q, r in nn_cases(rng):
            a = _fallback.nn_sqdist(q, r)
            b = _native.nn_sqdist(q, r)
            assert np.allclose(a, b, rtol=1e-12, atol=1e-12)

    def test_empty_ref_rejected(self):
        with pytest.raises(ValueError):
            _native.nn_sqdist(np.zeros((2, 3)), np.zeros((0, 3)))


def ray_cases(rng):
    for _ in range(5):
        k = 200
        origins = rng.uniform(-5, 5, (k, 3))
        origins[:, 2] = rng.uniform(0.5, 3.0, k)
        dirs = rng.normal(size=(k, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        boxes = []
        for _ in range(rng.integers(0, 5)):
            c = rng.uniform(-15, 15, 3)
            c[2] = rng.uniform(0.5, 3.0)
            yaw = rng.uniform(0, np.pi)
            cy, sy = np.cos(yaw), np.sin(yaw)
            rot = np.array([[cy, -sy, 0], [sy, cy, 0], [0, 0, 1]])
            half = rng.uniform(0.5, 3.0, 3)
            boxes.append(np.concatenate([c, rot.ravel(), half]))
        boxes = np.array(boxes).reshape(-1, 15)
        yield origins, dirs, boxes, bool(rng.integers(0, 2))


class TestRaycast:
    def test_axis_aligned_box_analytic(self):
        # ray down +x into a unit box at x = 10: entry at x = 9.5
        origins = np.array([[0.0, 0.0, 0.0]])
        dirs = np.array([[1.0, 0.0, 0.0]])
        box = np.concatenate([[10.0, 0.0, 0.0], np.eye(3).ravel(), [0.5, 0.5, 0.5]])
        t, code = _fallback.raycast(origins, dirs, box[None], False)
        assert t[0] == pytest.approx(9.5, abs=1e-12)
        assert code[0] == 1

    def test_ground_analytic(self):
        origins = np.array([[0.0, 0.0, 2.0]])
        dirs = np.array([[np.cos(-0.2), 0.0, np.sin(-0.2)]])
        t, code = _fallback.raycast(origins, dirs, np.zeros((0, 15)), True)
        assert t[0] == pytest.approx(2.0 / np.sin(0.2), rel=1e-12)
        assert code[0] == 0

    @needs_native
    def test_native_matches_fallback(self):
        rng = np.random.default_rng(3)
        for origins, dirs, boxes, ground in ray_cases(rng):
            t1, c1 = _fallback.raycast(origins, dirs, boxes, ground)
            t2, c2 = _native.raycast(origins, dirs, boxes, ground)
            assert (c1 == c2).all()
            both = np.isfinite(t1)
            assert (np.isfinite(t2) == both).all()
            if both.any():
                assert np.abs(t1[both] - t2[both]).max() < 1e-12
