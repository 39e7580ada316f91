"""Domain types for scenes: agent snapshots, graphs, windows and samples."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Hashable, Optional, Sequence

import numpy as np

HISTORY_STEPS = 15
HORIZON_STEPS = 25
SAMPLE_DT = 0.2


class AgentClass(str, Enum):
    VEHICLE = "vehicle"
    PEDESTRIAN = "pedestrian"

    @classmethod
    def parse(cls, value) -> "AgentClass":
        if isinstance(value, cls):
            return value
        text = str(value).strip().lower()
        if text in ("pedestrian", "ped", "person"):
            return cls.PEDESTRIAN
        if text in ("vehicle", "car", "truck", "bus", "motorcycle", "bicycle", "van", "trailer"):
            return cls.VEHICLE
        raise ValueError(f"unknown agent class {value!r}")


def wrap_angle(angle: float) -> float:
    """Map an angle to (-pi, pi]."""
    return math.pi - (math.pi - angle) % (2 * math.pi)


def wrap_angles(angles: np.ndarray) -> np.ndarray:
    angles = np.asarray(angles, dtype=float)
    return np.pi - np.mod(np.pi - angles, 2 * np.pi)


@dataclass(frozen=True)
class AgentState:
    """Kinematic snapshot of one agent at one instant (SI units)."""

    x: float
    y: float
    vx: float
    vy: float
    ax: float
    ay: float
    psi: float
    agent_class: AgentClass = AgentClass.VEHICLE
    agent_id: Hashable = 0

    def __post_init__(self):
        values = (self.x, self.y, self.vx, self.vy, self.ax, self.ay, self.psi)
        if not all(math.isfinite(v) for v in values):
            raise ValueError(f"non-finite kinematics for agent {self.agent_id!r}: {values}")
        object.__setattr__(self, "psi", wrap_angle(float(self.psi)))
        object.__setattr__(self, "agent_class", AgentClass.parse(self.agent_class))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])

    @property
    def velocity(self) -> np.ndarray:
        return np.array([self.vx, self.vy])

    def base_features(self) -> np.ndarray:
        return np.array([self.x, self.y, self.vx, self.vy, self.ax, self.ay, self.psi])


@dataclass(frozen=True)
class Polyline:
    """A typed road line; ``line_type`` is e.g. ``boundary``, ``lane_line`` or ``centerline``."""

    line_type: str
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 2)
        object.__setattr__(self, "points", pts)

    @property
    def length(self) -> float:
        if len(self.points) < 2:
            return 0.0
        return float(np.linalg.norm(np.diff(self.points, axis=0), axis=1).sum())


LINE_TYPES = ("boundary", "lane_line", "centerline")


@dataclass
class SceneGraph:
    """Directed inter-agent graph at one time index.

    ``edge_index[0]`` holds sources and ``edge_index[1]`` destinations, both
    as positions into ``node_ids``. ``edge_attr`` is the Euclidean distance
    between the endpoints.
    """

    node_ids: tuple
    positions: np.ndarray
    features: np.ndarray
    edge_index: np.ndarray
    edge_attr: np.ndarray
    timestamp: int = 0

    @property
    def num_nodes(self) -> int:
        return len(self.node_ids)

    @property
    def num_edges(self) -> int:
        return self.edge_index.shape[1]

    def self_loop_only(self) -> "SceneGraph":
        n = self.num_nodes
        idx = np.arange(n, dtype=np.int64)
        return replace(self, edge_index=np.stack([idx, idx]), edge_attr=np.zeros(n))


@dataclass
class LaneGraph:
    """Environmental nodes connected to agent nodes by directed env->agent edges."""

    env_positions: np.ndarray
    env_types: tuple
    agent_ids: tuple
    agent_positions: np.ndarray
    edge_index: np.ndarray
    edge_attr: np.ndarray

    @property
    def num_env(self) -> int:
        return len(self.env_positions)

    def neighbors_of(self, agent_index: int) -> np.ndarray:
        return self.edge_index[0, self.edge_index[1] == agent_index]


@dataclass
class ObservationWindow:
    """History graphs G_{1-h}..G_0 re-indexed onto the agents present at G_0.

    ``features`` is (h, A, F) with zeros where ``presence`` is False, and
    ``edges[i]`` is the (edge_index, distance) pair of graph ``i`` in window
    agent indices.
    """

    agent_ids: tuple
    graphs: list
    features: np.ndarray
    presence: np.ndarray
    edges: list

    def __post_init__(self):
        if len(self.graphs) > HISTORY_STEPS:
            raise ValueError(f"observation window longer than {HISTORY_STEPS} steps")

    @property
    def length(self) -> int:
        return len(self.graphs)

    @property
    def g0(self) -> SceneGraph:
        return self.graphs[-1]

    def without_interactions(self) -> "ObservationWindow":
        edges = []
        for present in self.presence:
            idx = np.flatnonzero(present).astype(np.int64)
            edges.append((np.stack([idx, idx]), np.zeros(len(idx))))
        return ObservationWindow(
            agent_ids=self.agent_ids,
            graphs=[g.self_loop_only() for g in self.graphs],
            features=self.features,
            presence=self.presence,
            edges=edges,
        )


@dataclass
class Condition:
    history: ObservationWindow
    lane: Optional[LaneGraph] = None

    def __post_init__(self):
        if self.lane is not None and tuple(self.lane.agent_ids) != tuple(self.history.agent_ids):
            raise ValueError("lane graph agents do not match the agents of G_0")

    def without_interactions(self) -> "Condition":
        return Condition(self.history.without_interactions(), self.lane)


@dataclass
class Sample:
    """One prediction problem: condition, init states and the ground-truth future."""

    condition: Condition
    future: np.ndarray
    target_mask: np.ndarray
    init_states: tuple
    g0: SceneGraph
    polylines: Sequence[Polyline] = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.future.ndim != 3 or self.future.shape[2] != 2:
            raise ValueError(f"future must be (A, N, 2), got {self.future.shape}")
        if len(self.init_states) != self.future.shape[0]:
            raise ValueError("init_states and future disagree on agent count")

    @property
    def agent_ids(self) -> tuple:
        return self.condition.history.agent_ids

    @property
    def num_agents(self) -> int:
        return len(self.init_states)

    @property
    def horizon(self) -> int:
        return self.future.shape[1]

    @property
    def anchor(self) -> np.ndarray:
        return np.array([[s.x, s.y] for s in self.init_states])

    @property
    def init_velocity(self) -> np.ndarray:
        return np.array([[s.vx, s.vy] for s in self.init_states])

    @property
    def classes(self) -> np.ndarray:
        return np.array([s.agent_class == AgentClass.PEDESTRIAN for s in self.init_states], dtype=np.int64)
