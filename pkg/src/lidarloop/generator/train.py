"""Toy-scale training: frozen-AE pretraining then conditioned noise
prediction, both on the synthetic corpus.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import torch

from lidarloop.generator.context import GeneratorContext, build_context
from lidarloop.generator.pipeline import GeneratorConfig, GeneratorModel, image_to_tensor
from lidarloop.generator.schedule import forward_noise
from lidarloop.rangeview import BeamTable, RangeImage, project
from lidarloop.scenemodel import FrameRecord


@dataclass
class TrainItem:
    """One supervised pair with every static tensor precomputed."""

    enc: dict[str, torch.Tensor]  # encoded context (frozen-AE latents etc.)
    z_target: torch.Tensor        # (c, h, w) target latent
    target_image: RangeImage
    ctx: GeneratorContext


def contexts_from_frames(
    frames: Sequence[FrameRecord],
    beams: BeamTable,
    config: GeneratorConfig,
) -> list[tuple[GeneratorContext, RangeImage]]:
    """Ground-truth-conditioned (context, target) pairs for s = 1..S."""
    out = []
    for s in range(1, len(frames)):
        prev, cur = frames[s - 1], frames[s]
        ctx = build_context(
            prev.cloud,
            prev.boxes,
            prev.ego,
            cur.boxes,
            cur.ego,
            beams,
            config.width,
            config.r_max,
            config.categories,
            config.mask_step_m,
        )
        target = project(cur.cloud, beams, config.width, config.r_max)
        out.append((ctx, target))
    return out


def train_autoencoder(
    model: GeneratorModel,
    images: Sequence[RangeImage],
    steps: int = 1500,
    batch: int = 16,
    lr: float = 2e-3,
    kl_weight: float = 1e-6,
    seed: int = 0,
) -> list[float]:
    """Reconstruction + small-KL pretraining; the AE is frozen afterwards."""
    ae = model.ae
    ae.train()
    data = torch.stack([image_to_tensor(img) for img in images])
    opt = torch.optim.Adam(ae.parameters(), lr=lr)
    lr_sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=steps, eta_min=lr * 0.02)
    rng = torch.Generator().manual_seed(seed)
    losses = []
    for _ in range(steps):
        idx = torch.randint(0, len(data), (batch,), generator=rng)
        x = data[idx]
        mu, logvar = ae.encode_dist(x)
        eps = torch.randn(mu.shape, generator=rng)
        z = mu + torch.exp(0.5 * logvar) * eps
        out = ae.decode_raw(z)
        recon, occ_logit = out[:, :-1], out[:, -1]
        occupied = (x[:, 0] > 0).float()
        mask = occupied[:, None]
        kl = 0.5 * (mu.pow(2) + logvar.exp() - 1.0 - logvar).mean()
        # depth/intensity regressed only where occupied; the occupancy head
        # owns the empty/occupied boundary. Depth-discontinuity pixels are
        # upweighted: a blurred jump decodes to a mid-air point, which is
        # exactly what the downstream point metrics punish hardest.
        depth = x[:, 0]
        jump = torch.zeros_like(depth)
        du = (depth[:, :, 1:] - depth[:, :, :-1]).abs()
        du = du * (depth[:, :, 1:] > 0) * (depth[:, :, :-1] > 0)
        jump[:, :, 1:] = du
        jump[:, :, :-1] = torch.maximum(jump[:, :, :-1], du)
        weight = (1.0 + 15.0 * jump.clamp(max=0.5))[:, None] * mask
        denom = weight.sum().clamp(min=1.0)
        err = (recon - x) * weight
        err_l1 = (recon - x).abs() * weight
        loss = (
            err.pow(2).sum() / denom
            + err_l1.sum() / denom
            + torch.nn.functional.binary_cross_entropy_with_logits(occ_logit, occupied)
            + kl_weight * kl
        )
        opt.zero_grad()
        loss.backward()
        opt.step()
        lr_sched.step()
        losses.append(float(loss.detach()))
    ae.eval()
    for p in ae.parameters():
        p.requires_grad_(False)
    return losses


def prepare_items(
    model: GeneratorModel,
    pairs: Sequence[tuple[GeneratorContext, RangeImage]],
) -> list[TrainItem]:
    items = []
    for ctx, target in pairs:
        enc = model.encode_context(ctx)
        with torch.no_grad():
            z_target = model.ae.encode(image_to_tensor(target)[None].to(model.dtype))[0]
        items.append(TrainItem(enc, z_target, target, ctx))
    return items


def _stack_enc(items: Sequence[TrainItem]) -> dict[str, torch.Tensor]:
    keys = items[0].enc.keys()
    return {k: torch.stack([it.enc[k] for it in items]) for k in keys}


EpsModel = Callable[[torch.Tensor, torch.Tensor, torch.Tensor, torch.Tensor], torch.Tensor]


def compute_loss(
    model: GeneratorModel,
    items: Sequence[TrainItem],
    rng: torch.Generator,
    eps_model: EpsModel | None = None,
) -> torch.Tensor:
    """Noise-prediction objective over a batch, as a differentiable scalar.

    Timesteps are drawn uniformly over [0, T]; with `eps_model` the noise
    predictor is replaced (used by the oracle test).
    """
    sched = model.schedule
    enc = _stack_enc(items)
    cond, ego, tokens = model.cond_tensors(enc, rng, apply_nm=True, batched=True)
    z0 = torch.stack([it.z_target for it in items]).to(cond.dtype)
    b = z0.shape[0]
    t = torch.randint(0, sched.steps + 1, (b,), generator=rng)
    eps = torch.randn(z0.shape, generator=rng, dtype=z0.dtype)
    z_t = forward_noise(z0, t, eps, sched)
    predictor = eps_model if eps_model is not None else (
        lambda z, tt, egov, tok: model.denoiser(z, tt, egov, tok)
    )
    pred = predictor(torch.cat([z_t, cond], dim=1), t, ego, tokens)
    loss = torch.nn.functional.mse_loss(pred, eps)
    if not torch.isfinite(loss):
        raise RuntimeError("training diverged: non-finite loss")
    return loss


def train_step(
    model: GeneratorModel,
    items: Sequence[TrainItem],
    rng: torch.Generator,
    optimizer: torch.optim.Optimizer | None = None,
    eps_model: EpsModel | None = None,
) -> float:
    """One optimization step; returns the scalar loss value."""
    loss = compute_loss(model, items, rng, eps_model)
    if optimizer is not None:
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
    return float(loss.detach())


def train_diffusion(
    model: GeneratorModel,
    items: Sequence[TrainItem],
    steps: int = 2000,
    batch: int = 8,
    lr: float = 1e-3,
    seed: int = 0,
) -> list[float]:
    """Train denoiser + conditioning modules; returns the per-step losses."""
    params = [p for p in model.parameters() if p.requires_grad]
    opt = torch.optim.Adam(params, lr=lr)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=steps, eta_min=lr * 0.05)
    rng = torch.Generator().manual_seed(seed)
    model.train()
    losses = []
    order_rng = np.random.default_rng(seed)
    for _ in range(steps):
        pick = order_rng.integers(0, len(items), batch)
        losses.append(train_step(model, [items[i] for i in pick], rng, opt))
        sched.step()
    model.eval()
    return losses
