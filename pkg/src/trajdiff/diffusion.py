"""Init-shifted diffusion process, reverse-time grid, transition rules and guidance.

The forward process is

    x_t = sqrt(g) x_0 + (1 - sqrt(g)) a + sqrt(1 - g) eps,     g = gamma(t)

with ``a`` the per-agent position at the prediction instant. Subtracting
``(1 - sqrt(g)) a`` ("centering") turns it into the standard process, so every
transition rule below runs on centered states and shifts back afterwards.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from typing import Callable, Optional

import numpy as np
import torch

logger = logging.getLogger(__name__)

SAMPLERS = ("ddpm", "ddim", "edm")


def linear_gamma(t):
    return 1.0 - t


def cosine_gamma(t):
    if isinstance(t, torch.Tensor):
        return torch.cos(0.5 * math.pi * t) ** 2
    return float(np.cos(0.5 * np.pi * t) ** 2)


GAMMAS = {"linear": linear_gamma, "cosine": cosine_gamma}


@dataclass(frozen=True)
class DiffusionSchedule:
    """Noise schedule, reverse-grid warp and sampler settings."""

    steps: int = 2
    rho: float = 3.0
    gamma_max: float = 1.0
    gamma_min: float = 1e-3
    sampler: str = "edm"
    eta: float = 0.0
    gamma: str = "linear"

    def __post_init__(self):
        if self.sampler not in SAMPLERS:
            raise ValueError(f"unknown sampler {self.sampler!r}; expected one of {SAMPLERS}")
        if self.gamma not in GAMMAS:
            raise ValueError(f"unknown gamma schedule {self.gamma!r}")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("eta must lie in [0, 1]")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")

    def gamma_fn(self, t):
        return GAMMAS[self.gamma](t)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "DiffusionSchedule":
        return cls(**data)


def reverse_grid(schedule: DiffusionSchedule) -> list:
    """Times t_0 > t_1 > ... > t_T = 0, warped by ``rho`` between gamma_max and gamma_min."""
    T, rho = schedule.steps, schedule.rho
    g_max, g_min = schedule.gamma_max, schedule.gamma_min
    if T < 1:
        raise ValueError("steps must be >= 1")
    if g_min >= g_max:
        raise ValueError(f"gamma_min ({g_min}) must be below gamma_max ({g_max})")
    hi, lo = g_max ** (1.0 / rho), g_min ** (1.0 / rho)
    grid = [(hi + (i / (T - 1)) * (lo - hi)) ** rho if T > 1 else g_max for i in range(T)]
    # pin the endpoints; the power round trip is not exact in floating point
    grid[0] = g_max
    if T > 1:
        grid[-1] = g_min
    grid.append(0.0)
    if any(b >= a for a, b in zip(grid, grid[1:])):
        raise ValueError(f"reverse grid is not strictly decreasing: {grid}")
    return grid


def _anchor_like(anchor: torch.Tensor, x: torch.Tensor) -> torch.Tensor:
    anchor = torch.as_tensor(anchor, dtype=x.dtype)
    return anchor.unsqueeze(-2) if anchor.dim() == x.dim() - 1 else anchor


def _check_time(t):
    lo, hi = (float(t.min()), float(t.max())) if isinstance(t, torch.Tensor) else (t, t)
    if lo < 0.0 or hi > 1.0:
        raise ValueError(f"diffusion time must lie in [0, 1], got {t}")


def forward_diffuse(x0: torch.Tensor, anchor: torch.Tensor, t, noise: torch.Tensor,
                    gamma: Callable = linear_gamma) -> torch.Tensor:
    """Sample x_t of the init-shifted forward process given explicit noise."""
    if noise.shape != x0.shape:
        raise ValueError(f"noise shape {tuple(noise.shape)} != x0 shape {tuple(x0.shape)}")
    _check_time(t)
    g = gamma(t)
    sg = torch.sqrt(g) if isinstance(g, torch.Tensor) else math.sqrt(g)
    s1g = torch.sqrt(1 - g) if isinstance(g, torch.Tensor) else math.sqrt(1 - g)
    return sg * x0 + (1 - sg) * _anchor_like(anchor, x0) + s1g * noise


def _shift(anchor, x, t, gamma):
    g = gamma(t)
    sg = torch.sqrt(g) if isinstance(g, torch.Tensor) else math.sqrt(g)
    return (1 - sg) * _anchor_like(anchor, x)


def center(x_t: torch.Tensor, anchor: torch.Tensor, t, gamma: Callable = linear_gamma) -> torch.Tensor:
    return x_t - _shift(anchor, x_t, t, gamma)


def uncenter(y_t: torch.Tensor, anchor: torch.Tensor, t, gamma: Callable = linear_gamma) -> torch.Tensor:
    return y_t + _shift(anchor, y_t, t, gamma)


def _alphas(t, t_next, gamma):
    if not t > t_next:
        raise ValueError(f"reverse step needs t > t_next, got {t} -> {t_next}")
    abar_t, abar_next = float(gamma(t)), float(gamma(t_next))
    if abar_t >= 1.0:
        raise ValueError("signal level is already 1 at t; nothing to denoise")
    return abar_t, abar_next


def ddpm_posterior(y_t, x0_hat, abar_t: float, abar_next: float):
    """Mean and variance of q(y_next | y_t, x0) for the standard process."""
    alpha_t = abar_t / abar_next if abar_next > 0 else 0.0
    beta_t = 1.0 - alpha_t
    mean = (math.sqrt(abar_next) * beta_t / (1 - abar_t)) * x0_hat \
        + (math.sqrt(alpha_t) * (1 - abar_next) / (1 - abar_t)) * y_t
    var = (1 - abar_next) / (1 - abar_t) * beta_t
    return mean, var


def ddim_posterior(y_t, x0_hat, abar_t: float, abar_next: float, eta: float):
    var = eta ** 2 * (1 - abar_next) / (1 - abar_t) * (1 - abar_t / abar_next) if abar_next > 0 else 0.0
    coef = math.sqrt(max(1 - abar_next - var, 0.0))
    mean = math.sqrt(abar_next) * x0_hat + coef * (y_t - math.sqrt(abar_t) * x0_hat) / math.sqrt(1 - abar_t)
    return mean, var


def _draw(mean, var, rng: Optional[torch.Generator]):
    if var <= 0.0:
        return mean
    noise = torch.randn(mean.shape, generator=rng, dtype=mean.dtype)
    return mean + math.sqrt(var) * noise


def ddpm_step(x_t, x0_hat, anchor, t, t_next, rng: Optional[torch.Generator] = None,
              gamma: Callable = linear_gamma):
    abar_t, abar_next = _alphas(t, t_next, gamma)
    mean, var = ddpm_posterior(center(x_t, anchor, t, gamma), x0_hat, abar_t, abar_next)
    return uncenter(_draw(mean, var, rng), anchor, t_next, gamma)


def ddim_step(x_t, x0_hat, anchor, t, t_next, eta: float = 0.0, rng: Optional[torch.Generator] = None,
              gamma: Callable = linear_gamma):
    if not 0.0 <= eta <= 1.0:
        raise ValueError("eta must lie in [0, 1]")
    abar_t, abar_next = _alphas(t, t_next, gamma)
    mean, var = ddim_posterior(center(x_t, anchor, t, gamma), x0_hat, abar_t, abar_next, eta)
    return uncenter(_draw(mean, var, rng), anchor, t_next, gamma)


def edm_step(x_t, x0_hat, anchor, t, t_next, gamma: Callable = linear_gamma):
    """Deterministic first-order probability-flow step (DDIM with eta = 0)."""
    return ddim_step(x_t, x0_hat, anchor, t, t_next, 0.0, None, gamma)


def guided_denoise(model: Callable, x_t, t, c, c_prime, w: float):
    """(1 - w) * model(x_t, t, c') + w * model(x_t, t, c); endpoints skip the unused branch."""
    if not 0.0 <= w <= 1.0:
        raise ValueError("guidance weight must lie in [0, 1]")
    if w == 1.0:
        return model(x_t, t, c)
    if w == 0.0:
        return model(x_t, t, c_prime)
    return (1 - w) * model(x_t, t, c_prime) + w * model(x_t, t, c)


def stream_seed(seed: int, index: int) -> int:
    """Independent 63-bit seed for sample stream ``index``."""
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(2, dtype=np.uint64)[0] >> np.uint64(1))


def transition(schedule: DiffusionSchedule, x_t, x0_hat, anchor, t, t_next, rng):
    gamma = schedule.gamma_fn
    if schedule.sampler == "ddpm":
        return ddpm_step(x_t, x0_hat, anchor, t, t_next, rng, gamma)
    if schedule.sampler == "ddim":
        return ddim_step(x_t, x0_hat, anchor, t, t_next, schedule.eta, rng, gamma)
    return edm_step(x_t, x0_hat, anchor, t, t_next, gamma)


def sample_trajectories(model: Callable, condition, anchor, schedule: DiffusionSchedule,
                        n_samples: int, seed: int, w: float = 1.0, horizon: int = 25,
                        c_prime=None) -> list:
    """Draw ``n_samples`` trajectories (A, N, 2) by running the reverse process.

    Sample ``j`` owns the random stream ``stream_seed(seed, j)``, so draws are
    paired across guidance weights and samplers. ``c_prime`` defaults to
    ``condition.without_interactions()`` and is only built when ``w < 1``.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    anchor = torch.as_tensor(anchor)
    if not torch.is_floating_point(anchor):
        anchor = anchor.to(torch.get_default_dtype())
    if c_prime is None and w < 1.0:
        c_prime = condition.without_interactions()
    grid = reverse_grid(schedule)
    logger.info("sampling %d x %s with %d reverse steps, grid %s, w=%.2f",
                n_samples, schedule.sampler, len(grid) - 1, [round(g, 6) for g in grid], w)
    shape = (*anchor.shape[:-1], horizon, anchor.shape[-1])
    out = []
    for j in range(n_samples):
        rng = torch.Generator().manual_seed(stream_seed(seed, j))
        x = anchor.unsqueeze(-2) + torch.randn(shape, generator=rng, dtype=anchor.dtype)
        for i, (t, t_next) in enumerate(zip(grid, grid[1:])):
            x0_hat = guided_denoise(model, x, t, condition, c_prime, w)
            x = transition(schedule, x, x0_hat, anchor, t, t_next, rng)
            logger.debug("sample %d reverse step %d/%d (%s): t=%.4g -> %.4g",
                         j, i + 1, schedule.steps, schedule.sampler, t, t_next)
        out.append(x)
    return out


__all__ = [
    "DiffusionSchedule", "reverse_grid", "forward_diffuse", "center", "uncenter",
    "ddpm_posterior", "ddim_posterior", "ddpm_step", "ddim_step", "edm_step",
    "guided_denoise", "sample_trajectories", "stream_seed", "linear_gamma", "SAMPLERS",
]
