"""Acceptance suite: one test per criterion, one printed PASS/FAIL line each.

Run with:  pytest tests/test_acceptance.py -v -s
The trained-generator fixture (criteria 6 and 7) takes ~15 minutes on a
laptop CPU; everything else finishes in well under a minute.
"""

import time
from contextlib import contextmanager

import numpy as np
import pytest
import torch

from helpers import beam_cloud, pixel_of, random_beam_table, survivors
from lidarloop.benchkit import (
    Cuboid,
    EgoTrack,
    ScenarioConfig,
    SynthWorld,
    default_beams,
    ingest,
    make_world,
    synth_scenario,
    write_scenario,
)
from lidarloop.benchkit.protocol import segment
from lidarloop.generator import (
    DiffusionGenerator,
    GeneratorConfig,
    GeneratorModel,
    SdeBaselineGenerator,
    build_context,
    contexts_from_frames,
    prepare_items,
    train_autoencoder,
    train_diffusion,
    train_step,
)
from lidarloop.generator.schedule import NMConfig, forward_noise
from lidarloop.generator.train import compute_loss
from lidarloop.metrics import BEVHistogram, chamfer, jsd, mmd, ray_errors
from lidarloop.rangeview import BeamTable, HoughConfig, hough_calibrate, project, unproject
from lidarloop.rollout import init_session, run, step
from lidarloop.scenemodel import EgoState, PointCloud, Pose, apply_pose, compose_relative
from lidarloop.sde import decouple, sde_step


@contextmanager
def criterion(label: str):
    try:
        yield
    except BaseException:
        print(f"\nACCEPTANCE {label}: FAIL")
        raise
    print(f"\nACCEPTANCE {label}: PASS")


# -- 1: codec round-trip ------------------------------------------------------


class TestCriterion1Codec:
    def test_round_trip_bitwise_and_nn_bound(self):
        with criterion("1 codec round-trip (H=8, W=128, 100 clouds)"):
            height, width, r_max = 8, 128, 80.0
            rng = np.random.default_rng(1001)
            t0 = time.perf_counter()
            total_pts = 0
            within = 0
            for _ in range(100):
                beams = random_beam_table(rng, rows=height)
                n = int(rng.integers(48, 72))
                cloud = beam_cloud(beams, rng, per_row=n, r_range=(2.0, 78.0))
                img = project(cloud, beams, width, r_max)
                back = unproject(img, beams)
                img2 = project(back, beams, width, r_max)
                assert np.array_equal(img.depth, img2.depth)
                assert np.array_equal(img.intensity, img2.intensity)

                surv, r = survivors(cloud.xyz, beams, width)
                d2 = (
                    ((cloud.xyz[surv][:, None, :] - back.xyz[None, :, :]) ** 2)
                    .sum(-1)
                    .min(1)
                )
                bound = r[surv] * (2 * np.pi / width) + r_max * 1e-6
                within += int((np.sqrt(d2) <= bound).sum())
                total_pts += len(surv)
            elapsed = time.perf_counter() - t0
            assert within / total_pts >= 0.99, f"{within}/{total_pts} within bound"
            assert elapsed < 10.0, f"codec suite took {elapsed:.1f}s"


# -- 2: Hough calibration -----------------------------------------------------


class TestCriterion2Hough:
    def test_eight_beams_twenty_seeds(self):
        with criterion("2 Hough calibration (8 beams x 20 seeds)"):
            cfg = HoughConfig()
            h_bin = (cfg.height_range[1] - cfg.height_range[0]) / cfg.height_bins
            p_bin = (cfg.elev_range[1] - cfg.elev_range[0]) / cfg.elev_bins
            for seed in range(20):
                rng = np.random.default_rng(2000 + seed)
                beams = random_beam_table(rng, rows=8)
                cloud = beam_cloud(beams, rng, per_row=400, r_range=(15.0, 50.0))
                est = hough_calibrate([cloud], rows=8, config=cfg)
                assert np.abs(est.heights - beams.heights).max() <= h_bin, f"seed {seed}"
                assert np.abs(est.elevations - beams.elevations).max() <= p_bin, f"seed {seed}"


# -- 3: SE(3) suite -----------------------------------------------------------


class TestCriterion3SE3:
    def test_composition_and_round_trip(self):
        with criterion("3 SE(3): Eq.-4 composition + apply/inverse (1000 quadruples)"):
            rng = np.random.default_rng(3001)

            def rand_pose(scale):
                q, r = np.linalg.qr(rng.normal(size=(3, 3)))
                q *= np.sign(np.diag(r))
                if np.linalg.det(q) < 0:
                    q[:, 0] = -q[:, 0]
                return Pose.from_rt(q, rng.uniform(-scale, scale, 3))

            for _ in range(1000):
                prev = EgoState(0, 0, 0, rand_pose(20), rand_pose(2))
                cur = EgoState(0, 0, 0, rand_pose(20), rand_pose(2))
                rel = compose_relative(prev, cur)
                oracle = np.linalg.inv(cur.ego2glb.matrix @ cur.li2ego.matrix) @ (
                    prev.ego2glb.matrix @ prev.li2ego.matrix
                )
                assert np.abs(rel.matrix - oracle).max() <= 1e-9

            cloud = PointCloud(rng.uniform(-40, 40, (200, 3)), rng.uniform(0, 1, 200))
            for _ in range(50):
                p = rand_pose(15)
                back = apply_pose(apply_pose(cloud, p), p.inverse())
                assert np.abs(back.xyz - cloud.xyz).max() <= 1e-9


# -- 4: SDE oracle ------------------------------------------------------------


def _criterion4_beams(rows=16):
    return BeamTable(np.full(rows, 1.8), np.linspace(-0.25, 0.05, rows))


_C4_BUILDINGS = (
    Cuboid(size=(8.0, 4.0, 6.0), center0=(22.0, 14.0, 3.0), yaw=0.1),
    Cuboid(size=(6.0, 5.0, 5.0), center0=(8.0, -13.0, 2.5), yaw=-0.2),
    Cuboid(size=(7.0, 4.0, 7.0), center0=(34.0, -15.0, 3.5), yaw=0.3),
    Cuboid(size=(9.0, 4.0, 6.5), center0=(-14.0, 10.0, 3.25), yaw=0.8),
)


class TestCriterion4SDE:
    WIDTH = 1024

    def test_foreground_estimate_chamfer(self):
        with criterion("4a SDE foreground estimate CD <= 0.05 m² at 19 steps"):
            beams = _criterion4_beams()
            cfg = ScenarioConfig(rows=16, width=self.WIDTH, n_buildings=0, n_actors=0)
            actor = Cuboid(
                size=(4.5, 2.0, 3.0), center0=(12.0, 2.5, 1.5), yaw=0.0,
                velocity=(1.2, 0.6, 0.0), category=1, annotated=True,
            )
            world = SynthWorld(boxes=(actor,), ego=EgoTrack(speed=1.2, yaw_rate=0.0))
            frames, _, _ = synth_scenario(0, 20, cfg, world=world, beams=beams)
            for s in range(1, 20):
                fg_est, _ = sde_step(frames[s - 1], frames[s].boxes, frames[s].ego)
                truth_fg = decouple(frames[s]).foreground
                assert len(fg_est) > 0 and len(truth_fg) > 0, f"step {s} empty"
                cd = chamfer(fg_est, truth_fg)
                assert cd <= 0.05, f"step {s}: fg CD {cd:.4f}"

    def test_rollout_beats_static_predictor(self):
        with criterion("4b SDE rollout beats the static predictor at every horizon"):
            beams = _criterion4_beams()
            cfg = ScenarioConfig(rows=16, width=self.WIDTH, n_buildings=0, n_actors=0)
            actor = Cuboid(
                size=(4.5, 2.0, 2.6), center0=(11.0, 3.0, 1.3), yaw=0.0,
                velocity=(0.6, 0.0, 0.0), category=1, annotated=True,
            )
            world = SynthWorld(
                boxes=_C4_BUILDINGS + (actor,), ego=EgoTrack(speed=0.6, yaw_rate=0.12)
            )
            frames, _, _ = synth_scenario(0, 20, cfg, world=world, beams=beams)
            sess = init_session(
                frames[0], frames, SdeBaselineGenerator(), 0, beams, self.WIDTH, 80.0, 3
            )
            outs = run(sess, 19)
            static_cloud = unproject(project(frames[0].cloud, beams, self.WIDTH, 80.0), beams)
            for s, out in enumerate(outs, start=1):
                cd_sde = chamfer(out.cloud, frames[s].cloud)
                cd_static = chamfer(static_cloud, frames[s].cloud)
                assert cd_sde < cd_static, (
                    f"horizon {s * 0.5:.1f}s: sde {cd_sde:.3f} >= static {cd_static:.3f}"
                )


# -- 5: metrics oracle equivalence --------------------------------------------


class TestCriterion5Metrics:
    def test_chamfer_vs_brute_force(self):
        with criterion("5a chamfer == O(n^2) brute force on 200 instances"):
            rng = np.random.default_rng(5001)
            for _ in range(200):
                na, nb = rng.integers(20, 80, 2)
                a = PointCloud(rng.uniform(-30, 30, (na, 3)), np.zeros(na))
                b = PointCloud(rng.uniform(-30, 30, (nb, 3)), np.zeros(nb))
                d_ab = np.array([((b.xyz - p) ** 2).sum(axis=1).min() for p in a.xyz])
                d_ba = np.array([((a.xyz - q) ** 2).sum(axis=1).min() for q in b.xyz])
                oracle = d_ab.mean() + d_ba.mean()
                assert abs(chamfer(a, b) - oracle) <= 1e-9

    def test_ray_errors_vs_loop(self):
        with criterion("5b ray errors == naive per-pixel loop"):
            rng = np.random.default_rng(5002)
            from lidarloop.rangeview import RangeImage

            for _ in range(20):
                d_gt = (rng.uniform(0, 1, (8, 16)) * (rng.random((8, 16)) > 0.3)).astype(np.float32)
                d_gen = (rng.uniform(0, 1, (8, 16)) * (rng.random((8, 16)) > 0.3)).astype(np.float32)
                if not (d_gt > 0).any():
                    continue
                gt = RangeImage(d_gt, np.where(d_gt > 0, 0.5, 0).astype(np.float32), 80.0)
                gen = RangeImage(d_gen, np.where(d_gen > 0, 0.5, 0).astype(np.float32), 80.0)
                l1, absrel = ray_errors(gen, gt)
                errs, rels = [], []
                for v in range(8):
                    for u in range(16):
                        if d_gt[v, u] <= 0:
                            continue
                        r_t = float(d_gt[v, u]) * 80.0
                        r_g = float(d_gen[v, u]) * 80.0 if d_gen[v, u] > 0 else 80.0
                        errs.append(abs(r_g - r_t))
                        rels.append(abs(r_g - r_t) / r_t * 100)
                assert abs(l1 - np.mean(errs)) <= 1e-9
                assert abs(absrel - np.mean(rels)) <= 1e-9

    def test_jsd_hand_case_and_mmd_identity(self):
        with criterion("5c JSD hand case to 1e-12; MMD(identical) <= 1e-9"):
            p = BEVHistogram(np.array([[1.0, 0.0, 0.0]] + [[0.0] * 3] * 2), 50.0)
            q = BEVHistogram(np.array([[0.5, 0.5, 0.0]] + [[0.0] * 3] * 2), 50.0)
            kl_pm = np.log2(1 / 0.75)
            kl_qm = 0.5 * np.log2(0.5 / 0.75) + 0.5 * np.log2(0.5 / 0.25)
            assert abs(jsd(p, q) - 0.5 * (kl_pm + kl_qm)) <= 1e-12
            rng = np.random.default_rng(5003)
            hists = [BEVHistogram(rng.uniform(0, 1, (10, 10)), 50.0) for _ in range(6)]
            assert mmd(hists, hists) <= 1e-9


# -- 8: benchmark protocol ----------------------------------------------------


class TestCriterion8Protocol:
    def test_segment_count_matches_reference(self, tmp_path):
        with criterion("8 benchmark segmentation protocol"):
            rng = np.random.default_rng(8001)
            cfg = ScenarioConfig(width=32, n_buildings=1, n_actors=0)
            all_frames = []
            t0 = 0.0
            beams = default_beams(8)
            for i, n in enumerate(int(rng.integers(15, 45)) for _ in range(8)):
                world, _ = make_world(300 + i, cfg)
                frames, _, _ = synth_scenario(
                    300 + i, n, cfg, world=world, beams=beams, scene_token=f"scene-{i}"
                )
                for f in frames:
                    all_frames.append(
                        type(f)(
                            timestamp=t0 + f.timestamp,
                            cloud=f.cloud,
                            boxes=f.boxes,
                            ego=f.ego,
                            scene_token=f.scene_token,
                        )
                    )
                t0 = all_frames[-1].timestamp + 0.5
            index = ingest(write_scenario(tmp_path, all_frames, beams, 32, 80.0))
            segments = segment(index)

            # independent windowing script: fixed 20-frame grid, drop mixed
            tokens = [f.scene_token for f in index.frames]
            expected = 0
            for start in range(0, len(tokens) - 19, 20):
                if len(set(tokens[start : start + 20])) == 1:
                    expected += 1
            assert len(segments) == expected
            for seg in segments:
                assert len(seg.frames) == 20
                assert len({f.scene_token for f in seg.frames}) == 1
                span = seg.frames[-1].timestamp - seg.frames[0].timestamp
                assert abs(span - 9.5) < 1e-9  # 20 frames at 0.5 s cadence


# -- 9: rollout purity and replay --------------------------------------------


class TestCriterion9Rollout:
    def test_purity_and_replay(self):
        with criterion("9 rollout purity instrumentation + byte replay"):
            from lidarloop.benchkit import cloud_to_bytes

            frames, _, beams = synth_scenario(901, 6, ScenarioConfig(width=256))

            def fresh():
                return init_session(
                    frames[0], frames, SdeBaselineGenerator(), 17, beams, 256, 80.0, 3
                )

            a, b = fresh(), fresh()
            for _ in range(4):
                fa, fb = step(a), step(b)
                assert cloud_to_bytes(fa.cloud) == cloud_to_bytes(fb.cloud)
            assert a.provenance == ["input"] + ["generated"] * 4

            tampered = fresh()
            step(tampered)
            tampered._last_source = "input"
            with pytest.raises(AssertionError, match="purity"):
                step(tampered)


# -- 10: service contract -----------------------------------------------------


class TestCriterion10Service:
    def test_http_contract(self, tmp_path):
        with criterion("10 service contract incl. concurrency serialization"):
            import threading

            from fastapi.testclient import TestClient

            import lidarloop.service as service_mod
            from lidarloop.service import ServiceConfig, create_app

            frames, _, beams = synth_scenario(777, 4, ScenarioConfig(width=128))
            write_scenario(tmp_path / "demo", frames, beams, 128, 80.0)
            app = create_app(ServiceConfig(scenario_dir=tmp_path))
            with TestClient(app, raise_server_exceptions=False) as client:
                payload = {"scenario": "demo", "generator": "sde", "seed": 0}
                created = client.post("/sessions", json=payload)
                assert created.status_code == 201
                sid = created.json()["id"]

                stepped = client.post(f"/sessions/{sid}/step", json={"edits": []})
                assert stepped.status_code == 200
                assert stepped.json()["point_count"] > 0
                got = client.get(f"/sessions/{sid}/frames/1")
                assert got.status_code == 200
                assert got.json()["cloud_b64"] == stepped.json()["cloud_b64"]

                assert client.post("/sessions/none/step", json={"edits": []}).status_code == 404
                assert client.get(f"/sessions/{sid}/frames/9").status_code == 404
                assert (
                    client.post(
                        f"/sessions/{sid}/step",
                        json={"edits": [{"kind": "remove", "box_id": 99}]},
                    ).status_code
                    == 422
                )
                assert client.post("/sessions", json={"generator": 3}).status_code == 400

                # concurrency: exactly one 200 and one 409
                gate = threading.Event()
                real_step = service_mod.step

                def slow_step(session, edits=()):
                    gate.wait(timeout=5)
                    return real_step(session, edits)

                service_mod.step = slow_step
                try:
                    codes = []
                    threads = [
                        threading.Thread(
                            target=lambda: codes.append(
                                client.post(f"/sessions/{sid}/step", json={"edits": []}).status_code
                            )
                        )
                        for _ in range(2)
                    ]
                    for t in threads:
                        t.start()
                    time.sleep(0.3)
                    gate.set()
                    for t in threads:
                        t.join()
                    assert sorted(codes) == [200, 409]
                finally:
                    service_mod.step = real_step

                exhausted = None
                for _ in range(4):
                    exhausted = client.post(f"/sessions/{sid}/step", json={"edits": []})
                assert exhausted is not None and exhausted.status_code == 409

                assert client.delete(f"/sessions/{sid}").status_code == 200
                assert client.delete(f"/sessions/{sid}").status_code == 404
