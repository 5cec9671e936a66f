"""Networks for the latent-diffusion generator: autoencoder, denoiser,
FiLM modulation, and the box-token cross-attention block.
"""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn


def _groups(ch: int) -> int:
    for g in (8, 4, 2, 1):
        if ch % g == 0:
            return g
    return 1


def sinusoidal_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    """Standard transformer-style timestep embedding, (B,) -> (B, dim)."""
    half = dim // 2
    freqs = torch.exp(-math.log(10_000.0) * torch.arange(half, dtype=torch.float64) / max(half - 1, 1))
    args = t.double()[:, None] * freqs[None, :]
    emb = torch.cat([torch.sin(args), torch.cos(args)], dim=1)
    if dim % 2:
        emb = F.pad(emb, (0, 1))
    return emb.to(t.device)


class FiLMLayer(nn.Module):
    """Per-channel affine modulation predicted from the relative-pose vector.

    Initialized to the identity (gamma = 1, beta = 0).
    """

    def __init__(self, cond_dim: int, channels: int, seed: int = 0) -> None:
        super().__init__()
        self.channels = channels
        self.affine = nn.Linear(cond_dim, 2 * channels)
        with torch.no_grad():
            self.affine.weight.zero_()
            self.affine.bias.zero_()
            self.affine.bias[:channels] = 1.0

    def forward(self, z: torch.Tensor, cond: torch.Tensor) -> torch.Tensor:
        if z.shape[1] != self.channels:
            raise ValueError(f"latent has {z.shape[1]} channels, FiLM expects {self.channels}")
        out = self.affine(cond.to(z.dtype))
        gamma, beta = out[:, : self.channels], out[:, self.channels :]
        return gamma[:, :, None, None] * z + beta[:, :, None, None]


class PlainResBlock(nn.Module):
    def __init__(self, channels: int) -> None:
        super().__init__()
        self.norm1 = nn.GroupNorm(_groups(channels), channels)
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.norm2 = nn.GroupNorm(_groups(channels), channels)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.conv1(F.silu(self.norm1(x)))
        h = self.conv2(F.silu(self.norm2(h)))
        return x + h


class LatentAE(nn.Module):
    """Residual convolutional VAE, downsample factor 4; mean-encoding at
    inference.

    The decoder carries an explicit occupancy head: depth values may bleed
    freely across empty regions during training (the depth loss is masked to
    occupied pixels), and occupancy decides emptiness crisply at decode time.
    Blurred occupied/empty boundaries would otherwise emit mid-air points.
    """

    def __init__(self, in_channels: int = 2, latent_channels: int = 4, base: int = 32) -> None:
        super().__init__()
        self.factor = 4
        self.latent_channels = latent_channels
        self.in_channels = in_channels
        self.encoder = nn.Sequential(
            nn.Conv2d(in_channels, base, 3, padding=1),
            PlainResBlock(base),
            nn.Conv2d(base, base * 2, 3, stride=2, padding=1),
            PlainResBlock(base * 2),
            nn.Conv2d(base * 2, base * 2, 3, stride=2, padding=1),
            PlainResBlock(base * 2),
            PlainResBlock(base * 2),
        )
        self.to_mu = nn.Conv2d(base * 2, latent_channels, 1)
        self.to_logvar = nn.Conv2d(base * 2, latent_channels, 1)
        self.decoder = nn.Sequential(
            nn.Conv2d(latent_channels, base * 2, 3, padding=1),
            PlainResBlock(base * 2),
            PlainResBlock(base * 2),
            nn.ConvTranspose2d(base * 2, base * 2, 4, stride=2, padding=1),
            PlainResBlock(base * 2),
            nn.ConvTranspose2d(base * 2, base, 4, stride=2, padding=1),
            PlainResBlock(base),
            nn.Conv2d(base, in_channels + 1, 3, padding=1),  # + occupancy logit
        )

    def encode_dist(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        h = self.encoder(x)
        return self.to_mu(h), self.to_logvar(h)

    def encode(
        self,
        x: torch.Tensor,
        sample: bool = False,
        rng: torch.Generator | None = None,
    ) -> torch.Tensor:
        mu, logvar = self.encode_dist(x)
        if not sample:
            return mu
        eps = torch.randn(mu.shape, generator=rng, dtype=mu.dtype)
        return mu + torch.exp(0.5 * logvar) * eps

    def decode_raw(self, z: torch.Tensor) -> torch.Tensor:
        """(B, in_channels + 1, H, W): channels, then the occupancy logit."""
        return self.decoder(z)

    def decode(self, z: torch.Tensor) -> torch.Tensor:
        out = self.decode_raw(z)
        occupied = (torch.sigmoid(out[:, -1:]) > 0.5).to(out.dtype)
        return out[:, :-1].clamp(0.0, 1.0) * occupied


class CrossBoxAttention(nn.Module):
    """Temporal attention over box tokens: current tokens query previous keys
    and retrieve current values; output keeps a residual path."""

    def __init__(self, dim: int) -> None:
        super().__init__()
        self.scale = dim**-0.5
        self.q = nn.Linear(dim, dim)
        self.k = nn.Linear(dim, dim)
        self.v = nn.Linear(dim, dim)
        self.out = nn.Linear(dim, dim)

    def forward(self, cur: torch.Tensor, prev: torch.Tensor) -> torch.Tensor:
        attn = torch.softmax(self.q(cur) @ self.k(prev).transpose(1, 2) * self.scale, dim=-1)
        return cur + self.out(attn @ self.v(cur))


class ResBlock(nn.Module):
    def __init__(self, channels: int, temb_dim: int) -> None:
        super().__init__()
        self.norm1 = nn.GroupNorm(_groups(channels), channels)
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.temb = nn.Linear(temb_dim, channels)
        self.norm2 = nn.GroupNorm(_groups(channels), channels)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)

    def forward(self, x: torch.Tensor, temb: torch.Tensor) -> torch.Tensor:
        h = self.conv1(F.silu(self.norm1(x)))
        h = h + self.temb(temb)[:, :, None, None]
        h = self.conv2(F.silu(self.norm2(h)))
        return x + h


class TokenInject(nn.Module):
    """Project attended box tokens onto a feature map and add residually."""

    def __init__(self, token_dim: int, channels: int, grid: tuple[int, int]) -> None:
        super().__init__()
        self.grid = grid
        self.proj = nn.Linear(token_dim, channels)
        with torch.no_grad():
            self.proj.weight.mul_(0.1)
            self.proj.bias.zero_()

    def forward(self, x: torch.Tensor, tokens: torch.Tensor) -> torch.Tensor:
        b, n, _ = tokens.shape
        gh, gw = self.grid
        if n != gh * gw:
            raise ValueError(f"{n} tokens do not fill grid {self.grid}")
        maps = self.proj(tokens).transpose(1, 2).reshape(b, -1, gh, gw)
        maps = F.interpolate(maps, size=x.shape[-2:], mode="nearest")
        return x + maps


class Denoiser(nn.Module):
    """Noise-prediction UNet over latents with skip connections, timestep
    embedding, additive ego embedding, and per-level box-token injection."""

    def __init__(
        self,
        latent_channels: int = 4,
        cond_channels: int = 12,
        latent_hw: tuple[int, int] = (2, 32),
        base: int = 32,
        levels: int = 3,
        temb_dim: int = 64,
        token_dim: int = 32,
        token_grid: tuple[int, int] = (1, 16),
        ego_dim: int = 19,
    ) -> None:
        super().__init__()
        if levels < 1:
            raise ValueError("need at least one level")
        self.latent_channels = latent_channels
        self.levels = levels
        self.temb_mlp = nn.Sequential(nn.Linear(temb_dim, temb_dim), nn.SiLU(), nn.Linear(temb_dim, temb_dim))
        self.ego_mlp = nn.Sequential(nn.Linear(ego_dim, temb_dim), nn.SiLU(), nn.Linear(temb_dim, temb_dim))
        self.temb_dim = temb_dim
        # dynamics and pose translations arrive in meters; keep MLP inputs O(1)
        ego_scale = torch.ones(ego_dim)
        ego_scale[0] = 0.1           # speed
        if ego_dim == 19:
            ego_scale[[6, 10, 14]] = 0.02  # translation entries of the flattened pose
        self.register_buffer("ego_scale", ego_scale)

        chans = [base] + [base * 2] * (levels - 1)
        self.in_conv = nn.Conv2d(latent_channels + cond_channels, chans[0], 3, padding=1)

        h, w = latent_hw
        self.down_blocks = nn.ModuleList()
        self.down_inject = nn.ModuleList()
        self.downs = nn.ModuleList()
        self.down_strides: list[tuple[int, int]] = []
        shapes = [(h, w)]
        for i in range(levels):
            self.down_blocks.append(ResBlock(chans[i], temb_dim))
            self.down_inject.append(TokenInject(token_dim, chans[i], token_grid))
            if i < levels - 1:
                sh = 2 if h % 2 == 0 and h > 1 else 1
                sw = 2 if w % 2 == 0 and w > 1 else 1
                self.down_strides.append((sh, sw))
                self.downs.append(nn.Conv2d(chans[i], chans[i + 1], 3, stride=(sh, sw), padding=1))
                h, w = h // sh, w // sw
                shapes.append((h, w))
        self.mid = ResBlock(chans[-1], temb_dim) if levels > 1 else None

        self.up_convs = nn.ModuleList()
        self.up_blocks = nn.ModuleList()
        self.up_inject = nn.ModuleList()
        for i in reversed(range(levels - 1)):
            self.up_convs.append(nn.Conv2d(chans[i + 1] + chans[i], chans[i], 3, padding=1))
            self.up_blocks.append(ResBlock(chans[i], temb_dim))
            self.up_inject.append(TokenInject(token_dim, chans[i], token_grid))
        self.level_shapes = shapes

        self.out_norm = nn.GroupNorm(_groups(chans[0]), chans[0])
        self.out_conv = nn.Conv2d(chans[0], latent_channels, 3, padding=1)
        with torch.no_grad():
            self.out_conv.weight.zero_()
            self.out_conv.bias.zero_()

    def forward(
        self,
        z: torch.Tensor,
        t: torch.Tensor,
        ego: torch.Tensor,
        tokens: torch.Tensor,
    ) -> torch.Tensor:
        temb = self.temb_mlp(sinusoidal_embedding(t, self.temb_dim).to(z.dtype))
        temb = temb + self.ego_mlp(ego.to(z.dtype) * self.ego_scale.to(z.dtype))

        x = self.in_conv(z)
        skips = []
        for i in range(self.levels):
            x = self.down_blocks[i](x, temb)
            x = self.down_inject[i](x, tokens)
            if i < self.levels - 1:
                skips.append(x)
                x = self.downs[i](x)
        if self.mid is not None:
            x = self.mid(x, temb)
        for k, i in enumerate(reversed(range(self.levels - 1))):
            x = F.interpolate(x, size=self.level_shapes[i], mode="nearest")
            x = self.up_convs[k](torch.cat([x, skips[i]], dim=1))
            x = self.up_blocks[k](x, temb)
            x = self.up_inject[k](x, tokens)
        return self.out_conv(F.silu(self.out_norm(x)))
