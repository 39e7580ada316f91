"""Closed-loop refinement: pure-pursuit tracking with a curvature-input unicycle."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .scene.types import SAMPLE_DT, AgentState, wrap_angle

logger = logging.getLogger(__name__)


class TrackingError(ValueError):
    pass


@dataclass(frozen=True)
class PursuitConfig:
    lookahead: float = 1.5
    speed_gain: float = 0.5
    exponent: int = 1

    def __post_init__(self):
        if self.lookahead <= 0 or self.speed_gain < 0:
            raise ValueError("lookahead must be positive and speed_gain nonnegative")
        if self.exponent not in (1, 2):
            raise ValueError("curvature exponent must be 1 or 2")
        if self.exponent != 1:
            logger.warning("pure pursuit uses the classical 2p/l^2 curvature (exponent=2)")


@dataclass(frozen=True)
class UnicycleState:
    x: float
    y: float
    psi: float
    v: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "psi", wrap_angle(self.psi))


def lookahead(v: float, config: PursuitConfig = PursuitConfig()) -> float:
    return config.lookahead + config.speed_gain * abs(v)


def pursuit_curvature(state: UnicycleState, ref_point, config: PursuitConfig = PursuitConfig()) -> float:
    """Curvature 2p / l_v^exponent towards ``ref_point``; p is its lateral offset in the body frame."""
    dx, dy = float(ref_point[0]) - state.x, float(ref_point[1]) - state.y
    if dx * dx + dy * dy < 1e-24:
        raise TrackingError("pursuit point coincides with the vehicle position")
    p = -dx * math.sin(state.psi) + dy * math.cos(state.psi)
    return 2.0 * p / lookahead(state.v, config) ** config.exponent


def initial_yaw(init_vel: np.ndarray, reference: np.ndarray, start: np.ndarray) -> np.ndarray:
    """Yaw from the initial velocity, or from the first reference displacement when at rest."""
    init_vel = np.asarray(init_vel, float)
    step = np.asarray(reference, float)[:, 0] - np.asarray(start, float)
    moving = np.hypot(init_vel[:, 0], init_vel[:, 1]) > 1e-6
    return np.where(moving, np.arctan2(init_vel[:, 1], init_vel[:, 0]), np.arctan2(step[:, 1], step[:, 0]))


def refine_batch(references, starts, yaws, config: PursuitConfig = PursuitConfig(), dt: float = SAMPLE_DT,
                 return_curvature: bool = False):
    """Refine (A, N, 2) references starting from (A, 2) positions with (A,) yaws."""
    references = np.asarray(references, dtype=np.float64)
    if references.ndim != 3 or references.shape[1] < 2:
        raise TrackingError("reference must hold at least 2 points")
    starts = np.asarray(starts, dtype=np.float64).reshape(-1, 2)
    init = np.column_stack([starts, np.asarray(yaws, dtype=np.float64).reshape(-1)])
    pos, curv = kernels.pursuit_rollout(references, init, float(dt), config.lookahead,
                                        config.speed_gain, float(config.exponent))
    return (pos, curv) if return_curvature else pos


def refine_trajectory(reference, init: AgentState, config: PursuitConfig = PursuitConfig(),
                      dt: float = SAMPLE_DT) -> np.ndarray:
    """Track one reference trajectory (N, 2) from ``init``; returns (N, 2) positions.

    Speeds follow consecutive reference points (the first from the initial
    position); the pursuit point is the first reference point whose arc
    length exceeds the projected progress by the lookahead.
    """
    reference = np.asarray(reference, dtype=np.float64)
    if reference.ndim != 2 or reference.shape[0] < 2:
        raise TrackingError("reference must hold at least 2 points")
    return refine_batch(reference[None], [[init.x, init.y]], [init.psi], config, dt)[0]
