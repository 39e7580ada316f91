"""Turn regularly sampled agent tracks into :class:`Sample` objects."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .graphs import (
    DEFAULT_LANE_K,
    DEFAULT_LANE_SPACING,
    DEFAULT_RADIUS,
    FeatureProfile,
    build_interaction_graph,
    build_lane_graph,
)
from .types import (
    HISTORY_STEPS,
    HORIZON_STEPS,
    AgentState,
    Condition,
    ObservationWindow,
    Polyline,
    Sample,
)


@dataclass(frozen=True)
class GraphConfig:
    radius: float = DEFAULT_RADIUS
    lane_spacing: float = DEFAULT_LANE_SPACING
    lane_k: int = DEFAULT_LANE_K


def finite_difference(values: np.ndarray, dt: float) -> np.ndarray:
    """Central differences along the last-but-one axis (one-sided at the ends)."""
    if values.shape[0] < 2:
        return np.zeros_like(values)
    return np.gradient(values, dt, axis=0)


def kinematics_from_positions(pos: np.ndarray, dt: float) -> np.ndarray:
    """(K, 2) positions -> (K, 7) [x, y, vx, vy, ax, ay, psi]."""
    vel = finite_difference(pos, dt)
    acc = finite_difference(vel, dt)
    psi = np.arctan2(vel[:, 1], vel[:, 0])
    return np.concatenate([pos, vel, acc, psi[:, None]], axis=1)


def assemble_sample(agent_ids: Sequence, classes: Sequence, kin: np.ndarray, present: np.ndarray,
                    k0: int, profile: FeatureProfile, polylines: Sequence[Polyline] = (),
                    graph_cfg: GraphConfig = GraphConfig(), history: int = HISTORY_STEPS,
                    horizon: int = HORIZON_STEPS, meta: Optional[dict] = None) -> Optional[Sample]:
    """Build the sample whose prediction instant is index ``k0``.

    ``kin`` is (A, K, 7) and ``present`` (A, K). Agents present at ``k0`` form
    the node set; those observed over the full horizon become targets, the
    rest stay as context. Returns None when no agent qualifies as a target.
    """
    if k0 + horizon > kin.shape[1] - 1:
        return None
    active = np.flatnonzero(present[:, k0])
    if len(active) == 0:
        return None
    target = present[active, k0 + 1:k0 + horizon + 1].all(axis=1)
    if not target.any():
        return None

    ids = tuple(agent_ids[a] for a in active)
    local = {aid: i for i, aid in enumerate(ids)}

    def states_at(k, which):
        return [AgentState(*kin[a, k], agent_class=classes[a], agent_id=agent_ids[a]) for a in which]

    start = max(0, k0 - history + 1)
    graphs, edges = [], []
    n_feat = profile.num_features
    feats = np.zeros((k0 - start + 1, len(active), n_feat))
    pres = np.zeros((k0 - start + 1, len(active)), dtype=bool)
    for i, k in enumerate(range(start, k0 + 1)):
        which = [a for a in active if present[a, k]]
        g = build_interaction_graph(states_at(k, which), graph_cfg.radius, profile, polylines, timestamp=k - k0)
        graphs.append(g)
        to_local = np.array([local[n] for n in g.node_ids], dtype=np.int64)
        if len(to_local):
            feats[i, to_local] = g.features
            pres[i, to_local] = True
        edges.append((to_local[g.edge_index] if g.num_edges else g.edge_index, g.edge_attr))

    init_states = tuple(states_at(k0, active))
    window = ObservationWindow(agent_ids=ids, graphs=graphs, features=feats, presence=pres, edges=edges)
    lane = build_lane_graph(init_states, polylines, graph_cfg.lane_spacing, graph_cfg.lane_k) \
        if profile.uses_lane_graph else None

    future = kin[active, k0 + 1:k0 + horizon + 1, :2].copy()
    anchor = kin[active, k0, :2]
    future[~target] = anchor[~target, None, :]
    return Sample(
        condition=Condition(window, lane),
        future=future,
        target_mask=target,
        init_states=init_states,
        g0=graphs[-1],
        polylines=tuple(polylines),
        meta=dict(meta or {}),
    )
