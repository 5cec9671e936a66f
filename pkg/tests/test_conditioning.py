import numpy as np
import pytest
import torch

from lidarloop.conditioning import (
    BoxMaskStack,
    MaskEncoder,
    box_masks,
    encode_masks,
    ego_feature,
    interpolate_bottom_face,
    relpose_vector,
)
from lidarloop.rangeview import BeamTable
from lidarloop.scenemodel import BBox, EgoState, Pose


def box_at(center, size=(2.0, 2.0, 2.0), yaw=0.0, category=0):
    return BBox.from_center_size_yaw(np.asarray(center, dtype=float), size, yaw, category)


def beams8():
    return BeamTable(np.full(8, 0.1), np.linspace(-0.3, 0.05, 8))


class TestInterpolateBottomFace:
    def test_two_by_two_with_unit_step(self):
        box = box_at([0, 0, 1.0])
        cloud = interpolate_bottom_face(box, step=1.0)
        xyz = cloud.xyz
        assert np.allclose(xyz[:, 2], 0.0, atol=1e-12)
        assert np.abs(xyz[:, :2]).max() <= 1.0 + 1e-12
        # 4 corners + 4 edge midpoints + 2 interior points per diagonal
        corner_set = {(-1, -1), (-1, 1), (1, -1), (1, 1)}
        found = {tuple(np.round(p, 9)) for p in xyz[:, :2]}
        assert corner_set <= found
        assert {(0.0, -1.0), (0.0, 1.0), (-1.0, 0.0), (1.0, 0.0)} <= found

    def test_large_step_gives_corners_plus_diagonal_midpoints(self):
        box = box_at([0, 0, 1.0])
        cloud = interpolate_bottom_face(box, step=100.0)
        assert len(cloud) == 6  # 4 corners + 2 diagonal midpoints
        assert {(0.0, 0.0)} == {
            tuple(np.round(p, 9)) for p in cloud.xyz[:, :2] if np.abs(p).max() < 0.5
        }

    def test_points_on_plane_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            # random tilted box via free rotation
            q, r = np.linalg.qr(rng.normal(size=(3, 3)))
            q *= np.sign(np.diag(r))
            if np.linalg.det(q) < 0:
                q[:, 0] = -q[:, 0]
            pose = Pose.from_rt(q, rng.uniform(-5, 5, 3))
            box = box_at([0, 0, 0], size=(3.0, 1.5, 1.0)).transformed(pose)
            cloud = interpolate_bottom_face(box, step=0.4)
            from lidarloop.scenemodel import bottom_face

            corners, _ = bottom_face(box)
            normal = np.cross(corners[1] - corners[0], corners[2] - corners[0])
            normal /= np.linalg.norm(normal)
            dist = np.abs((cloud.xyz - corners[0]) @ normal)
            assert dist.max() < 1e-9

    def test_bad_step(self):
        with pytest.raises(ValueError):
            interpolate_bottom_face(box_at([0, 0, 0]), step=0.0)


class TestBoxMasks:
    def test_empty_list_all_zero(self):
        stack = box_masks([], beams8(), width=64, categories=3)
        assert stack.masks.shape == (3, 8, 64)
        assert stack.masks.sum() == 0

    def test_beyond_max_range_all_zero(self):
        box = box_at([500.0, 0, 1.0])
        stack = box_masks([box], beams8(), width=64, categories=2, r_max=80.0)
        assert stack.masks.sum() == 0

    def test_azimuth_span_analytic(self):
        width = 256
        box = box_at([12.0, 0.0, 1.0], size=(2.0, 3.0, 2.0))
        stack = box_masks([box], beams8(), width=width, categories=1)
        cols = np.flatnonzero(stack.masks[0].any(axis=0))
        assert cols.size > 0
        # corner azimuths of the bottom face bound every set pixel
        from lidarloop.scenemodel import bottom_face

        corners, _ = bottom_face(box)
        thetas = np.arctan2(corners[:, 1], corners[:, 0])
        u_candidates = []
        for th in (thetas.min(), thetas.max()):
            u_candidates.append(
                int(np.floor(width - (th + np.pi) / (2 * np.pi) * width)) % width
            )
        lo, hi = min(u_candidates), max(u_candidates)
        assert cols.min() >= lo and cols.max() <= hi

    def test_category_channel_selected(self):
        box = box_at([10.0, 0, 1.0], category=2)
        stack = box_masks([box], beams8(), width=64, categories=4)
        assert stack.masks[2].sum() > 0
        assert stack.masks[[0, 1, 3]].sum() == 0

    def test_category_out_of_range(self):
        box = box_at([10.0, 0, 1.0], category=5)
        with pytest.raises(ValueError):
            box_masks([box], beams8(), width=64, categories=3)

    def test_order_invariance(self):
        rng = np.random.default_rng(1)
        boxes = [
            box_at(rng.uniform([-20, -20, 0.5], [20, 20, 1.5]), category=int(rng.integers(0, 3)))
            for _ in range(5)
        ]
        a = box_masks(boxes, beams8(), width=128, categories=3)
        b = box_masks(list(reversed(boxes)), beams8(), width=128, categories=3)
        assert np.array_equal(a.masks, b.masks)

    def test_validation(self):
        with pytest.raises(ValueError):
            BoxMaskStack(np.full((1, 2, 2), 3, dtype=np.uint8))


class TestMaskEncoder:
    def test_zero_stack_gives_pos_plus_bias(self):
        enc = MaskEncoder(categories=2, height=8, width=64, dim=16, seed=0)
        stack = BoxMaskStack(np.zeros((2, 8, 64), dtype=np.uint8))
        tokens = encode_masks(stack, enc)
        assert tokens.shape == (8, 16)  # (H/8)*(W/8) = 1*8
        expected = (enc.pos[0] + enc.embed.bias[:, None, None]).flatten(1).T
        assert torch.allclose(tokens, expected)

    def test_single_patch_locality(self):
        enc = MaskEncoder(categories=1, height=8, width=64, dim=16, seed=1)
        base = np.zeros((1, 8, 64), dtype=np.uint8)
        poke = base.copy()
        poke[0, 3, 10] = 1  # patch column 10 // 8 = 1
        t0 = encode_masks(BoxMaskStack(base), enc)
        t1 = encode_masks(BoxMaskStack(poke), enc)
        diff = (t0 - t1).abs().sum(dim=1)
        assert diff[1] > 0
        assert torch.allclose(diff[torch.arange(8) != 1], torch.zeros(7))

    def test_deterministic_replay(self):
        stack = BoxMaskStack((np.arange(2 * 8 * 64).reshape(2, 8, 64) % 2).astype(np.uint8))
        a = encode_masks(stack, MaskEncoder(2, 8, 64, dim=16, seed=7))
        b = encode_masks(stack, MaskEncoder(2, 8, 64, dim=16, seed=7))
        assert torch.equal(a, b)

    def test_bounded_response_to_unit_probe(self):
        enc = MaskEncoder(categories=1, height=8, width=64, dim=16, seed=2)
        rng = np.random.default_rng(3)
        for _ in range(5):
            base = (rng.random((1, 8, 64)) > 0.5).astype(np.uint8)
            poke = base.copy()
            v, u = rng.integers(0, 8), rng.integers(0, 64)
            poke[0, v, u] = 1 - poke[0, v, u]
            t0 = encode_masks(BoxMaskStack(base), enc)
            t1 = encode_masks(BoxMaskStack(poke), enc)
            delta = (t0 - t1).norm()
            weight_bound = enc.embed.weight.detach().abs().max() * np.sqrt(16)
            assert float(delta) <= float(weight_bound) + 1e-6


class TestVectors:
    def test_stationary_identity(self):
        v = ego_feature(EgoState.stationary())
        assert v.shape == (19,)
        assert np.array_equal(v[:3], [0, 0, 0])
        assert np.array_equal(v[3:].reshape(4, 4), np.eye(4))

    def test_speed_only(self):
        ego = EgoState(5.0, 0.0, 0.0, Pose.identity(), Pose.identity())
        v = ego_feature(ego)
        assert v[0] == 5.0
        assert np.array_equal(v[3:].reshape(4, 4), np.eye(4))

    def test_round_trip_pose(self):
        rng = np.random.default_rng(4)
        pose = Pose.from_yaw(0.8, rng.uniform(-10, 10, 3))
        ego = EgoState(1.0, 0.5, -0.1, pose, Pose.identity())
        v = ego_feature(ego)
        assert np.array_equal(v[3:].reshape(4, 4), pose.matrix)

    def test_relpose_round_trip(self):
        pose = Pose.from_yaw(-0.4, np.array([1.0, 2.0, 3.0]))
        v = relpose_vector(pose)
        assert v.shape == (16,)
        assert np.array_equal(v.reshape(4, 4), pose.matrix)
        assert np.abs(Pose(v.reshape(4, 4)).matrix - pose.matrix).max() == 0.0
