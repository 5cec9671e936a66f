"""Diffusion noise schedule, forward process, and noise modulation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch


@dataclass(frozen=True)
class DiffusionSchedule:
    """Variance schedule indexed by t in [0, T]; alpha_bar[0] is exactly 1."""

    betas: np.ndarray  # (T + 1,), betas[0] unused and kept at 0

    def __post_init__(self) -> None:
        b = np.asarray(self.betas, dtype=np.float64).copy()
        if b.ndim != 1 or b.size < 2:
            raise ValueError("need at least one diffusion step")
        b[0] = 0.0
        if not ((b[1:] > 0).all() and (b[1:] < 1).all()):
            raise ValueError("betas must lie in (0, 1)")
        b.flags.writeable = False
        object.__setattr__(self, "betas", b)
        a_bar = np.cumprod(1.0 - b)
        if not (np.diff(a_bar[1:]) < 0).all():
            raise ValueError("alpha_bar must be strictly decreasing")
        a_bar.flags.writeable = False
        object.__setattr__(self, "_alpha_bars", a_bar)

    @classmethod
    def linear(cls, steps: int, beta_start: float = 1e-4, beta_end: float = 2e-2) -> "DiffusionSchedule":
        return cls(np.concatenate([[0.0], np.linspace(beta_start, beta_end, steps)]))

    @property
    def steps(self) -> int:
        return self.betas.size - 1

    @property
    def alphas(self) -> np.ndarray:
        return 1.0 - self.betas

    @property
    def alpha_bars(self) -> np.ndarray:
        return self._alpha_bars  # type: ignore[attr-defined]


def forward_noise(
    z0: torch.Tensor,
    t: int | torch.Tensor,
    eps: torch.Tensor,
    sched: DiffusionSchedule,
) -> torch.Tensor:
    """q(z_t | z_0): sqrt(abar_t) z0 + sqrt(1 - abar_t) eps."""
    a_bar = sched.alpha_bars
    if isinstance(t, torch.Tensor):
        tv = t.long()
        if (tv < 0).any() or (tv > sched.steps).any():
            raise ValueError("timestep out of range")
        ab = torch.from_numpy(a_bar.copy()).to(z0.dtype)[tv]
        shape = (-1,) + (1,) * (z0.ndim - 1)
        ab = ab.reshape(shape)
    else:
        if not 0 <= int(t) <= sched.steps:
            raise ValueError(f"timestep {t} out of [0, {sched.steps}]")
        ab = torch.tensor(a_bar[int(t)], dtype=z0.dtype)
    return torch.sqrt(ab) * z0 + torch.sqrt(1.0 - ab) * eps


@dataclass(frozen=True)
class NMConfig:
    """Noise modulation: conditioning latents get forward noise at a level
    drawn uniformly from [0, n_max]."""

    n_max: int

    def validate(self, sched: DiffusionSchedule) -> None:
        if not 0 <= self.n_max <= sched.steps:
            raise ValueError(f"n_max {self.n_max} outside [0, {sched.steps}]")


def noise_modulate(
    cond: torch.Tensor,
    rng: torch.Generator,
    nm: NMConfig,
    sched: DiffusionSchedule,
) -> torch.Tensor:
    """Perturb a conditioning latent with a random forward-noise level."""
    nm.validate(sched)
    n = int(torch.randint(0, nm.n_max + 1, (1,), generator=rng).item())
    eps = torch.randn(cond.shape, generator=rng, dtype=cond.dtype)
    return forward_noise(cond, n, eps, sched)
