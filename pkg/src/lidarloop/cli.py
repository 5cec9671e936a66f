"""Command-line interface: scenario synthesis, SDE stepping, toy training,
sampling, rollout, evaluation, and the HTTP service.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np


def _cmd_synth(args) -> int:
    from lidarloop.benchkit import ScenarioConfig, synth_scenario, write_scenario

    cfg = ScenarioConfig(
        rows=args.rows,
        width=args.width,
        n_buildings=args.buildings,
        n_actors=args.actors,
    )
    frames, _, beams = synth_scenario(args.seed, args.frames, cfg)
    index = write_scenario(args.out, frames, beams, cfg.width, cfg.r_max)
    print(f"wrote {len(frames)} frames to {index}")
    return 0


def _cmd_sde_step(args) -> int:
    from lidarloop.benchkit import ingest, save_cloud
    from lidarloop.sde import sde_step

    index = ingest(Path(args.scenario) / "index.jsonl")
    s = args.step
    if not 1 <= s < len(index.frames):
        print(f"step must be in [1, {len(index.frames) - 1}]", file=sys.stderr)
        return 2
    prev, cur = index.frames[s - 1], index.frames[s]
    fg, bg = sde_step(prev, cur.boxes, cur.ego)
    save_cloud(fg, args.out_fg)
    save_cloud(bg, args.out_bg)
    print(f"estimated foreground: {len(fg)} points -> {args.out_fg}")
    print(f"estimated background: {len(bg)} points -> {args.out_bg}")
    return 0


def _cmd_train_toy(args) -> int:
    from lidarloop.benchkit import ScenarioConfig, synth_scenario
    from lidarloop.generator import (
        GeneratorConfig,
        GeneratorModel,
        contexts_from_frames,
        prepare_items,
        save_model,
        train_autoencoder,
        train_diffusion,
    )
    from lidarloop.rangeview import project

    gcfg = GeneratorConfig(rows=args.rows, width=args.width)
    scfg = ScenarioConfig(rows=args.rows, width=args.width)
    model = GeneratorModel(gcfg, seed=args.seed)

    pairs = []
    images = []
    beams = None
    for k in range(args.scenarios):
        frames, _, beams = synth_scenario(args.seed + k, args.frames, scfg)
        images.extend(project(f.cloud, beams, gcfg.width, gcfg.r_max) for f in frames)
        pairs.extend(contexts_from_frames(frames, beams, gcfg))
        for ctx, _ in pairs[-(len(frames) - 1) :]:
            images.extend([ctx.fg_image, ctx.bg_image])
    print(f"corpus: {len(pairs)} supervised pairs, {len(images)} images")

    ae_losses = train_autoencoder(model, images, steps=args.ae_steps, seed=args.seed)
    print(f"autoencoder: loss {ae_losses[0]:.4f} -> {np.mean(ae_losses[-50:]):.4f}")

    items = prepare_items(model, pairs)
    losses = train_diffusion(model, items, steps=args.ldm_steps, seed=args.seed)
    first = float(np.mean(losses[:100]))
    last = float(np.mean(losses[-100:]))
    print(f"diffusion: smoothed loss {first:.4f} -> {last:.4f}")

    save_model(model, args.out)
    print(f"checkpoint -> {args.out}")
    return 0


def _load_generator(kind: str, checkpoint: str | None, rows: int, width: int, r_max: float):
    from lidarloop.generator import (
        DiffusionGenerator,
        GeneratorConfig,
        GeneratorModel,
        SdeBaselineGenerator,
        load_model,
    )

    if kind == "sde":
        return SdeBaselineGenerator()
    if checkpoint:
        model = load_model(checkpoint)
    else:
        model = GeneratorModel(GeneratorConfig(rows=rows, width=width, r_max=r_max), seed=0)
        print("warning: no checkpoint given, using an untrained generator", file=sys.stderr)
    return DiffusionGenerator(model)


def _cmd_sample(args) -> int:
    from lidarloop.benchkit import ingest, load_beams, save_cloud
    from lidarloop.generator import DiffusionGenerator, build_context, load_model
    from lidarloop.rangeview import save_range_image, unproject

    index = ingest(Path(args.scenario) / "index.jsonl")
    beams, width, r_max = load_beams(args.scenario)
    model = load_model(args.checkpoint)
    s = args.step
    prev, cur = index.frames[s - 1], index.frames[s]
    ctx = build_context(
        prev.cloud, prev.boxes, prev.ego, cur.boxes, cur.ego,
        beams, width, r_max, model.config.categories, model.config.mask_step_m,
    )
    img = DiffusionGenerator(model).generate(ctx, args.seed)
    cloud = unproject(img, beams)
    save_cloud(cloud, args.out_cloud)
    print(f"sampled frame {s}: {len(cloud)} points -> {args.out_cloud}")
    if args.out_image:
        save_range_image(img, args.out_image)
        print(f"range image -> {args.out_image}")
    return 0


def _cmd_rollout(args) -> int:
    from lidarloop.benchkit import ingest, load_beams, write_scenario
    from lidarloop.rollout import init_session, run

    index = ingest(Path(args.scenario) / "index.jsonl")
    beams, width, r_max = load_beams(args.scenario)
    frames = list(index.frames)
    steps = args.steps if args.steps is not None else len(frames) - 1
    categories = max([3] + [b.category + 1 for f in frames for b in f.boxes])
    generator = _load_generator(args.generator, args.checkpoint, beams.rows, width, r_max)
    session = init_session(frames[0], frames, generator, args.seed, beams, width, r_max, categories)
    generated = run(session, steps)
    out_frames = [frames[0]] + generated
    write_scenario(args.out, out_frames, beams, width, r_max)
    print(f"rolled out {steps} steps ({args.generator}) -> {args.out}")
    return 0


def _cmd_eval(args) -> int:
    from lidarloop.benchkit import ingest, load_beams
    from lidarloop.metrics import eval_sequence
    from lidarloop.rangeview import project

    gen_index = ingest(Path(args.generated) / "index.jsonl")
    gt_index = ingest(Path(args.truth) / "index.jsonl")
    n = min(len(gen_index.frames), len(gt_index.frames))
    gen = [f.cloud for f in gen_index.frames[args.skip : n]]
    gt = [f.cloud for f in gt_index.frames[args.skip : n]]
    gen_imgs = gt_imgs = None
    if args.images:
        beams, width, r_max = load_beams(args.truth)
        gen_imgs = [project(c, beams, width, r_max) for c in gen]
        gt_imgs = [project(c, beams, width, r_max) for c in gt]
    report = eval_sequence(
        gen, gt, args.cadence, gen_imgs, gt_imgs, start_horizon_s=args.skip * args.cadence
    )
    print(report.table())
    records = "\n".join(json.dumps(r) for r in report.as_records())
    if args.out:
        Path(args.out).write_text(records + "\n", encoding="utf-8")
        print(f"records -> {args.out}")
    else:
        print(records)
    return 0


def _cmd_serve(args) -> int:
    from lidarloop.service import run_server

    run_server(
        host=args.host,
        port=args.port,
        scenario_dir=args.scenario_dir,
        session_ttl_s=args.ttl,
        checkpoint=args.checkpoint,
    )
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="lidarloop")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic ray-cast scenario")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--frames", type=int, default=20)
    p.add_argument("--out", required=True)
    p.add_argument("--rows", type=int, default=8)
    p.add_argument("--width", type=int, default=512)
    p.add_argument("--buildings", type=int, default=5)
    p.add_argument("--actors", type=int, default=2)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("sde-step", help="one scene-decoupling forecast step")
    p.add_argument("--scenario", required=True)
    p.add_argument("--step", type=int, default=1)
    p.add_argument("--out-fg", required=True)
    p.add_argument("--out-bg", required=True)
    p.set_defaults(func=_cmd_sde_step)

    p = sub.add_parser("train-toy", help="train the toy diffusion generator")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rows", type=int, default=8)
    p.add_argument("--width", type=int, default=128)
    p.add_argument("--scenarios", type=int, default=6)
    p.add_argument("--frames", type=int, default=10)
    p.add_argument("--ae-steps", type=int, default=1500)
    p.add_argument("--ldm-steps", type=int, default=2000)
    p.set_defaults(func=_cmd_train_toy)

    p = sub.add_parser("sample", help="sample one frame from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--scenario", required=True)
    p.add_argument("--step", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-cloud", required=True)
    p.add_argument("--out-image")
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("rollout", help="autoregressive rollout over a scenario")
    p.add_argument("--scenario", required=True)
    p.add_argument("--generator", choices=["sde", "diffusion"], default="sde")
    p.add_argument("--checkpoint")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_rollout)

    p = sub.add_parser("eval", help="per-horizon report: generated vs truth")
    p.add_argument("--generated", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--cadence", type=float, default=0.5)
    p.add_argument("--skip", type=int, default=1, help="frames to skip (frame 0 is given)")
    p.add_argument("--images", action="store_true", help="include per-ray L1/AbsRel")
    p.add_argument("--out", help="write line-delimited records here")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("serve", help="run the session HTTP service")
    p.add_argument("--host", default=os.environ.get("LIDARLOOP_HOST", "127.0.0.1"))
    p.add_argument("--port", type=int, default=int(os.environ.get("LIDARLOOP_PORT", "8323")))
    p.add_argument("--scenario-dir", default=os.environ.get("LIDARLOOP_SCENARIO_DIR"))
    p.add_argument("--ttl", type=float, default=float(os.environ.get("LIDARLOOP_SESSION_TTL", "3600")))
    p.add_argument("--checkpoint", default=os.environ.get("LIDARLOOP_CHECKPOINT"))
    p.set_defaults(func=_cmd_serve)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
