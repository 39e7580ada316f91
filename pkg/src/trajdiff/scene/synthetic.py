"""Desk-scale synthetic scenes: a two-lane straight road and a circular roundabout.

Straight scenes come in three scenarios:

* ``constant``     every vehicle keeps its lane and speed
* ``lane_change``  an ego closes in on a slower leader and changes lane because
                   the adjacent lane is free
* ``blocked``      same approach, but a vehicle travels alongside in the adjacent
                   lane, so the ego brakes to the leader's speed instead

The ego's own history is drawn from the same small set in both interacting
scenarios; only the neighbouring vehicles tell them apart.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .assemble import GraphConfig, assemble_sample, kinematics_from_positions
from .graphs import FeatureProfile
from .types import HISTORY_STEPS, HORIZON_STEPS, SAMPLE_DT, AgentClass, Polyline

LANE_WIDTH = 3.75
ROAD_LENGTH = (-100.0, 500.0)
ROUNDABOUT_RADIUS = 20.0
ROUNDABOUT_LANE_HALF_WIDTH = 2.0

_K = HISTORY_STEPS + HORIZON_STEPS
_K0 = HISTORY_STEPS - 1


@dataclass
class SyntheticTracks:
    agent_ids: list
    classes: list
    kin: np.ndarray        # (A, K, 7)
    present: np.ndarray    # (A, K)
    polylines: list
    meta: dict = field(default_factory=dict)


def _times(pad: int = 1) -> np.ndarray:
    return (np.arange(-pad, _K + pad) - _K0) * SAMPLE_DT


def _smoothstep(s: np.ndarray) -> np.ndarray:
    s = np.clip(s, 0.0, 1.0)
    return s * s * s * (10 - 15 * s + 6 * s * s)


def _smoothstep_integral(s: np.ndarray) -> np.ndarray:
    # antiderivative of the quintic smoothstep, continued linearly past s = 1
    c = np.clip(s, 0.0, 1.0)
    inside = 2.5 * c ** 4 - 3 * c ** 5 + c ** 6
    return inside + np.maximum(s - 1.0, 0.0)


def straight_road_polylines() -> list:
    xs = np.array(ROAD_LENGTH)
    return [
        Polyline("boundary", np.stack([xs, [0.0, 0.0]], 1)),
        Polyline("lane_line", np.stack([xs, [LANE_WIDTH, LANE_WIDTH]], 1)),
        Polyline("boundary", np.stack([xs, [2 * LANE_WIDTH, 2 * LANE_WIDTH]], 1)),
    ]


def roundabout_polylines(radius: float = ROUNDABOUT_RADIUS, n: int = 181) -> list:
    th = np.linspace(0.0, 2 * np.pi, n)
    circle = np.stack([np.cos(th), np.sin(th)], 1)
    return [
        Polyline("boundary", (radius - ROUNDABOUT_LANE_HALF_WIDTH) * circle),
        Polyline("centerline", radius * circle),
        Polyline("boundary", (radius + ROUNDABOUT_LANE_HALF_WIDTH) * circle),
    ]


def _lane_center(lane: int) -> float:
    return (lane + 0.5) * LANE_WIDTH


def _finish(paths: Sequence[np.ndarray], present: np.ndarray, polylines, meta) -> SyntheticTracks:
    kin = np.stack([kinematics_from_positions(p, SAMPLE_DT)[1:-1] for p in paths])
    ids = list(range(len(paths)))
    return SyntheticTracks(ids, [AgentClass.VEHICLE] * len(paths), kin, present, polylines, meta)


def _straight_scene(rng: np.random.Generator) -> SyntheticTracks:
    t = _times()
    scenario = rng.choice(["constant", "lane_change", "blocked"], p=[0.3, 0.35, 0.35])
    paths = []
    if scenario == "constant":
        n_agents = int(rng.integers(2, 4))
        xs = 40.0 + np.cumsum(rng.uniform(20.0, 45.0, n_agents))
        for i in range(n_agents):
            v = rng.uniform(20.0, 32.0)
            y = _lane_center(int(rng.integers(0, 2)))
            paths.append(np.stack([xs[i] + v * t, np.full_like(t, y)], 1))
    else:
        v_ego = float(rng.choice([26.0, 29.0, 32.0]))
        dv = float(rng.choice([6.0, 8.0]))
        x_ego = 60.0
        t_start, duration = 0.2, 4.0
        s = (t - t_start) / duration
        if scenario == "lane_change":
            y = _lane_center(0) + LANE_WIDTH * _smoothstep(s)
            ego = np.stack([x_ego + v_ego * t, y], 1)
        else:
            x = x_ego + v_ego * t - dv * duration * _smoothstep_integral(s)
            ego = np.stack([x, np.full_like(t, _lane_center(0))], 1)
        gap = rng.uniform(28.0, 38.0)
        leader = np.stack([x_ego + gap + (v_ego - dv) * t, np.full_like(t, _lane_center(0))], 1)
        if scenario == "lane_change":
            offset = rng.choice([rng.uniform(-95.0, -70.0), rng.uniform(70.0, 95.0)])
        else:
            offset = rng.uniform(-8.0, 6.0)
        v_side = v_ego + rng.uniform(-1.0, 1.0)
        side = np.stack([x_ego + offset + v_side * t, np.full_like(t, _lane_center(1))], 1)
        paths = [ego, leader, side]
    present = np.ones((len(paths), _K), dtype=bool)
    meta = {
        "kind": "straight_lane_change",
        "scenario": str(scenario),
        "interacting": scenario != "constant",
        "constant_speed": scenario == "constant",
    }
    return _finish(paths, present, straight_road_polylines(), meta)


def _circular_scene(rng: np.random.Generator) -> SyntheticTracks:
    t = _times()
    n_agents = int(rng.integers(2, 5))
    paths, present = [], np.ones((n_agents, _K), dtype=bool)
    angles = rng.uniform(0, 2 * np.pi) + np.sort(rng.uniform(0, 2 * np.pi, n_agents))
    for i in range(n_agents):
        omega = rng.uniform(6.0, 10.0) / ROUNDABOUT_RADIUS
        th = angles[i] + omega * t
        paths.append(ROUNDABOUT_RADIUS * np.stack([np.cos(th), np.sin(th)], 1))
        if i > 0 and rng.random() < 0.4:
            # entry: appears part-way through the history
            present[i, : int(rng.integers(1, _K0))] = False
        elif i > 0 and rng.random() < 0.3:
            # exit: leaves during the horizon, kept as context only
            present[i, int(rng.integers(_K0 + 1, _K)):] = False
    meta = {"kind": "circular_roundabout", "scenario": "circulating", "interacting": n_agents > 1,
            "constant_speed": False}
    return _finish(paths, present, roundabout_polylines(), meta)


def generate_synthetic_tracks(kind: str, n: int, seed: int) -> list:
    if n < 1:
        raise ValueError("n must be >= 1")
    makers = {"straight_lane_change": _straight_scene, "circular_roundabout": _circular_scene}
    if kind not in makers:
        raise ValueError(f"unknown synthetic kind {kind!r}; expected one of {sorted(makers)}")
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        tracks = makers[kind](rng)
        tracks.meta["scene_id"] = f"{kind}-{seed}-{i:04d}"
        out.append(tracks)
    return out


def profile_for_kind(kind: str) -> FeatureProfile:
    return FeatureProfile("highway" if kind == "straight_lane_change" else "roundabout")


def generate_synthetic_scenes(kind: str, n: int, seed: int,
                              graph_cfg: GraphConfig = GraphConfig()) -> list:
    """``n`` deterministic samples of the given kind (one prediction instant each)."""
    profile = profile_for_kind(kind)
    samples = []
    for tr in generate_synthetic_tracks(kind, n, seed):
        s = assemble_sample(tr.agent_ids, tr.classes, tr.kin, tr.present, _K0, profile,
                            tr.polylines, graph_cfg, meta=tr.meta)
        samples.append(s)
    return samples
