"""Differentially constrained decoders and the Heun integrator."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import torch
from torch import nn


class IntegrationError(FloatingPointError):
    def __init__(self, step: int, message: str = "non-finite state derivative"):
        super().__init__(f"{message} at step {step}")
        self.step = step


@dataclass(frozen=True)
class VehicleModelConfig:
    mu: float = 0.7
    g: float = 9.81

    def __post_init__(self):
        if self.mu <= 0:
            raise ValueError("road adhesion mu must be positive")

    @property
    def bound(self) -> float:
        return self.mu * self.g


def friction_clamp(u: torch.Tensor, config: VehicleModelConfig = VehicleModelConfig()) -> torch.Tensor:
    """Saturate the magnitude of planar inputs (..., 2) at mu*g, keeping their direction.

    Equivalent to clamping rho in polar form and mapping back with cos/sin of
    the unchanged angle; scaling by rho'/rho avoids the angle round trip.
    """
    rho = torch.linalg.vector_norm(u, dim=-1, keepdim=True)
    safe = torch.where(rho > 0, rho, torch.ones_like(rho))
    scale = torch.where(rho > config.bound, config.bound / safe, torch.ones_like(rho))
    return u * scale


def vehicle_dynamics(state: torch.Tensor, u: torch.Tensor) -> torch.Tensor:
    """Point mass: state (x, y, vx, vy), input accelerations (ux, uy)."""
    return torch.cat([state[..., 2:4], u], dim=-1)


class PedestrianField(nn.Module):
    """Decoupled learned vector fields f_x(s, u_x), f_y(s, u_y)."""

    def __init__(self, hidden: int = 32, depth: int = 2, zero_output: bool = False):
        super().__init__()

        def mlp():
            layers, width = [], 3
            for _ in range(depth):
                layers += [nn.Linear(width, hidden), nn.Tanh()]
                width = hidden
            layers.append(nn.Linear(width, 1))
            return nn.Sequential(*layers)

        self.f_x = mlp()
        self.f_y = mlp()
        if zero_output:
            for f in (self.f_x, self.f_y):
                nn.init.zeros_(f[-1].weight)
                nn.init.zeros_(f[-1].bias)

    def forward(self, state: torch.Tensor, u: torch.Tensor) -> torch.Tensor:
        dx = self.f_x(torch.cat([state, u[..., :1]], dim=-1))
        dy = self.f_y(torch.cat([state, u[..., 1:2]], dim=-1))
        return torch.cat([dx, dy], dim=-1)


def pedestrian_dynamics(state: torch.Tensor, u: torch.Tensor, params: PedestrianField,
                        origin: Optional[torch.Tensor] = None) -> torch.Tensor:
    """(x_dot, y_dot) of the pedestrian model; ``origin`` makes the field translation invariant."""
    s = state if origin is None else state - origin
    return params(s, u)


def heun_integrate(dynamics: Callable, x_init: torch.Tensor, controls: torch.Tensor, dt: float = 0.2,
                   position_dims: Optional[int] = 2, check_finite: bool = True) -> torch.Tensor:
    """Explicit trapezoidal (Heun) rollout with zero-order-hold controls.

    ``x_init`` is (..., S) and ``controls`` (..., N, C). Returns the first
    ``position_dims`` components of the N post-step states (all of them when
    ``position_dims`` is None), shape (..., N, ·).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    state = x_init
    out = []
    for k in range(controls.shape[-2]):
        u = controls[..., k, :]
        k1 = dynamics(state, u)
        k2 = dynamics(state + dt * k1, u)
        if check_finite and not (torch.isfinite(k1).all() and torch.isfinite(k2).all()):
            raise IntegrationError(k)
        state = state + 0.5 * dt * (k1 + k2)
        out.append(state if position_dims is None else state[..., :position_dims])
    return torch.stack(out, dim=-2)


def rollout_vehicle(pos0: torch.Tensor, vel0: torch.Tensor, controls: torch.Tensor, dt: float = 0.2,
                    config: VehicleModelConfig = VehicleModelConfig(), clamp: bool = True) -> torch.Tensor:
    u = friction_clamp(controls, config) if clamp else controls
    return heun_integrate(vehicle_dynamics, torch.cat([pos0, vel0], dim=-1), u, dt)


def rollout_pedestrian(pos0: torch.Tensor, controls: torch.Tensor, field: PedestrianField,
                       dt: float = 0.2) -> torch.Tensor:
    return heun_integrate(lambda s, u: pedestrian_dynamics(s, u, field, pos0), pos0, controls, dt)
