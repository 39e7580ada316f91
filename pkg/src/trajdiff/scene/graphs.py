"""Graph construction and node features."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .types import LINE_TYPES, AgentState, LaneGraph, Polyline, SceneGraph

logger = logging.getLogger(__name__)

DEFAULT_RADIUS = 50.0
DEFAULT_LANE_SPACING = 2.0
DEFAULT_LANE_K = 4


@dataclass(frozen=True)
class FeatureProfile:
    """Which node features a dataset profile carries.

    highway:    base kinematics + (dy, dr), no lane graph
    roundabout: base kinematics (+ optional polar r, theta) and a lane graph
    """

    name: str = "highway"
    polar_center: Optional[tuple] = None

    def __post_init__(self):
        if self.name not in ("highway", "roundabout"):
            raise ValueError(f"unknown profile {self.name!r}")

    @property
    def uses_lane_graph(self) -> bool:
        return self.name == "roundabout"

    @property
    def num_features(self) -> int:
        if self.name == "highway":
            return 9
        return 9 if self.polar_center is not None else 7


LANE_FEATURES = 2 + len(LINE_TYPES)


def _clip_unit(value: float, what: str) -> float:
    if abs(value) > 1.0:
        logger.warning("%s = %.4f outside [-1, 1]; clipped", what, value)
        return float(np.clip(value, -1.0, 1.0))
    return value


def _lines_y_at(polylines: Sequence[Polyline], x: float) -> np.ndarray:
    ys = []
    for line in polylines:
        pts = line.points
        if len(pts) == 0:
            continue
        order = np.argsort(pts[:, 0], kind="stable")
        ys.append(float(np.interp(x, pts[order, 0], pts[order, 1])))
    return np.sort(np.array(ys))


def highway_features(x: float, y: float, polylines: Sequence[Polyline]) -> tuple:
    """Lateral deviations (dy, dr) from the lane centerline and road center.

    Polylines are read as longitudinal lines; their lateral offset is
    interpolated at ``x``. Each deviation is normalized by half of the
    respective width and clipped to [-1, 1].
    """
    ys = _lines_y_at(polylines, x)
    if len(ys) < 2:
        return 0.0, 0.0
    lo, hi = ys[0], ys[-1]
    road_half = (hi - lo) / 2
    dr = (y - (lo + hi) / 2) / road_half if road_half > 0 else 0.0
    k = int(np.clip(np.searchsorted(ys, y) - 1, 0, len(ys) - 2))
    lane_lo, lane_hi = ys[k], ys[k + 1]
    lane_half = (lane_hi - lane_lo) / 2
    dy = (y - (lane_lo + lane_hi) / 2) / lane_half if lane_half > 0 else 0.0
    return _clip_unit(float(dy), "dy"), _clip_unit(float(dr), "dr")


def node_features(state: AgentState, profile: FeatureProfile,
                  polylines: Sequence[Polyline] = ()) -> np.ndarray:
    base = state.base_features()
    if profile.name == "highway":
        return np.concatenate([base, highway_features(state.x, state.y, polylines)])
    if profile.polar_center is not None:
        cx, cy = profile.polar_center
        dx, dy = state.x - cx, state.y - cy
        return np.concatenate([base, [np.hypot(dx, dy), np.arctan2(dy, dx)]])
    return base


def build_interaction_graph(states: Sequence[AgentState], radius: float = DEFAULT_RADIUS,
                            profile: FeatureProfile = FeatureProfile(),
                            polylines: Sequence[Polyline] = (), timestamp: int = 0) -> SceneGraph:
    """Radius graph over agents with self-loops and distance edge features."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    n = len(states)
    pos = np.array([[s.x, s.y] for s in states], dtype=float).reshape(n, 2)
    feats = np.array([node_features(s, profile, polylines) for s in states],
                     dtype=float).reshape(n, profile.num_features)
    dist = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
    adj = dist <= radius
    np.fill_diagonal(adj, True)
    # rows = destination, columns = source; row-major order keeps edges grouped by destination
    dst, src = np.nonzero(adj)
    edge_index = np.stack([src, dst]).astype(np.int64)
    edge_attr = dist[dst, src]
    return SceneGraph(
        node_ids=tuple(s.agent_id for s in states),
        positions=pos,
        features=feats,
        edge_index=edge_index,
        edge_attr=edge_attr,
        timestamp=timestamp,
    )


def resample_polyline(points: np.ndarray, spacing: float) -> np.ndarray:
    """Points at fixed arc-length spacing, endpoint included."""
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(points) < 2:
        return points.copy()
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    total = s[-1]
    if total == 0:
        return points[:1].copy()
    n_inner = int(np.ceil(total / spacing - 1e-9))
    targets = np.append(np.arange(n_inner) * spacing, total)
    return np.stack([np.interp(targets, s, points[:, 0]), np.interp(targets, s, points[:, 1])], axis=1)


def build_lane_graph(states: Sequence[AgentState], polylines: Sequence[Polyline],
                     spacing: float = DEFAULT_LANE_SPACING, k: int = DEFAULT_LANE_K) -> LaneGraph:
    """Resample polylines into environmental nodes and connect each agent
    from its ``k`` nearest ones."""
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    if k < 1:
        raise ValueError("k must be >= 1")
    env_pts, env_types = [], []
    for line in polylines:
        pts = resample_polyline(line.points, spacing)
        env_pts.append(pts)
        env_types.extend([line.line_type] * len(pts))
    env = np.concatenate(env_pts) if env_pts else np.zeros((0, 2))
    agents = np.array([[s.x, s.y] for s in states], dtype=float).reshape(-1, 2)
    src, dst, attr = [], [], []
    if len(env):
        dist = np.linalg.norm(agents[:, None, :] - env[None, :, :], axis=-1)
        kk = min(k, len(env))
        for a in range(len(agents)):
            nearest = np.argsort(dist[a], kind="stable")[:kk]
            src.extend(nearest.tolist())
            dst.extend([a] * kk)
            attr.extend(dist[a, nearest].tolist())
    return LaneGraph(
        env_positions=env,
        env_types=tuple(env_types),
        agent_ids=tuple(s.agent_id for s in states),
        agent_positions=agents,
        edge_index=np.array([src, dst], dtype=np.int64).reshape(2, -1),
        edge_attr=np.array(attr, dtype=float),
    )


def lane_node_features(lane: LaneGraph) -> np.ndarray:
    onehot = np.zeros((lane.num_env, len(LINE_TYPES)))
    for i, kind in enumerate(lane.env_types):
        if kind in LINE_TYPES:
            onehot[i, LINE_TYPES.index(kind)] = 1.0
    return np.concatenate([lane.env_positions, onehot], axis=1)
