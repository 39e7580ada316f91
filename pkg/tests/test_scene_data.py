import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trajdiff.scene import (
    AgentState,
    FeatureProfile,
    Polyline,
    SceneDataError,
    SceneFormatError,
    build_interaction_graph,
    build_lane_graph,
    generate_synthetic_scenes,
    highway_features,
    load_polylines,
    load_scene_csv,
    resample_polyline,
    save_polylines,
    wrap_angle,
    write_scene_csv,
)
from trajdiff.scene.synthetic import ROUNDABOUT_RADIUS, generate_synthetic_tracks, straight_road_polylines


def agent(x, y, vx=0.0, vy=0.0, aid=0, cls="vehicle"):
    return AgentState(x, y, vx, vy, 0.0, 0.0, math.atan2(vy, vx), cls, aid)


# ---- AgentState -------------------------------------------------------------

def test_agent_state_wraps_yaw_into_half_open_interval():
    assert agent(0, 0).psi == 0.0
    assert AgentState(0, 0, 0, 0, 0, 0, -math.pi).psi == pytest.approx(math.pi)
    assert AgentState(0, 0, 0, 0, 0, 0, 3 * math.pi).psi == pytest.approx(math.pi)


def test_agent_state_rejects_non_finite():
    with pytest.raises(ValueError):
        AgentState(float("nan"), 0, 0, 0, 0, 0, 0)


@given(st.floats(-50, 50))
def test_wrap_angle_range(a):
    w = wrap_angle(a)
    assert -math.pi < w <= math.pi
    assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-9)
    assert math.isclose(math.sin(w), math.sin(a), abs_tol=1e-9)


# ---- interaction graph ------------------------------------------------------

def test_two_agents_within_radius():
    g = build_interaction_graph([agent(0, 0, aid="a"), agent(3, 4, aid="b")], radius=10)
    assert g.num_edges == 4
    self_loops = g.edge_index[0] == g.edge_index[1]
    assert self_loops.sum() == 2
    assert np.allclose(g.edge_attr[~self_loops], 5.0)
    assert np.allclose(g.edge_attr[self_loops], 0.0)


def test_singleton_graph():
    g = build_interaction_graph([agent(1, 2)], radius=10)
    assert g.num_nodes == 1
    assert g.edge_index.tolist() == [[0], [0]]


def test_agents_out_of_range():
    g = build_interaction_graph([agent(0, 0, aid=1), agent(50, 0, aid=2)], radius=10)
    assert np.all(g.edge_index[0] == g.edge_index[1])


def test_radius_must_be_positive():
    with pytest.raises(ValueError):
        build_interaction_graph([agent(0, 0)], radius=0)


positions = st.lists(st.tuples(st.floats(-80, 80), st.floats(-80, 80)), min_size=1, max_size=7)


@settings(max_examples=50, deadline=None)
@given(positions, st.floats(1, 60))
def test_graph_invariants(pts, radius):
    states = [agent(x, y, aid=i) for i, (x, y) in enumerate(pts)]
    g = build_interaction_graph(states, radius=radius)
    src, dst = g.edge_index
    # self-loop on every node
    assert set(src[src == dst].tolist()) == set(range(len(states)))
    # edge feature = endpoint distance
    d = np.linalg.norm(g.positions[src] - g.positions[dst], axis=1)
    assert np.allclose(g.edge_attr, d, atol=1e-9)
    # symmetric edges with equal features
    edges = {(int(s), int(t)): a for s, t, a in zip(src, dst, g.edge_attr)}
    for (s, t), a in edges.items():
        assert edges[(t, s)] == a


@settings(max_examples=30, deadline=None)
@given(positions, st.randoms(use_true_random=False))
def test_graph_permutation_equivariance(pts, rnd):
    states = [agent(x, y, aid=i) for i, (x, y) in enumerate(pts)]
    perm = list(range(len(states)))
    rnd.shuffle(perm)
    g = build_interaction_graph(states, radius=30)
    h = build_interaction_graph([states[p] for p in perm], radius=30)
    ids_g = {(g.node_ids[s], g.node_ids[t]): a for s, t, a in zip(*g.edge_index, g.edge_attr)}
    ids_h = {(h.node_ids[s], h.node_ids[t]): a for s, t, a in zip(*h.edge_index, h.edge_attr)}
    assert ids_g == ids_h


# ---- highway features -------------------------------------------------------

def test_highway_features_on_lane_center():
    lines = straight_road_polylines()
    dy, dr = highway_features(10.0, 1.875, lines)
    assert dy == pytest.approx(0.0)
    assert dr == pytest.approx(-0.5)


def test_highway_features_clip_with_warning(caplog):
    lines = straight_road_polylines()
    with caplog.at_level(logging.WARNING):
        dy, dr = highway_features(10.0, 20.0, lines)
    assert dy == 1.0 and dr == 1.0
    assert "clipped" in caplog.text


@given(st.floats(-200, 400), st.floats(-30, 30))
def test_highway_features_bounded(x, y):
    dy, dr = highway_features(x, y, straight_road_polylines())
    assert -1.0 <= dy <= 1.0 and -1.0 <= dr <= 1.0


def test_feature_lengths_per_profile():
    assert FeatureProfile("highway").num_features == 9
    assert FeatureProfile("roundabout").num_features == 7
    assert FeatureProfile("roundabout", (0.0, 0.0)).num_features == 9


# ---- lane graph -------------------------------------------------------------

def test_lane_graph_nearest_neighbor():
    lines = [Polyline("boundary", [[1, 0]]), Polyline("boundary", [[5, 0]])]
    lg = build_lane_graph([agent(0, 0)], lines, spacing=2, k=1)
    assert lg.edge_index.tolist() == [[0], [0]]
    assert lg.env_positions[0].tolist() == [1.0, 0.0]


def test_lane_graph_k_saturates():
    lines = [Polyline("boundary", [[1, 0], [3, 0]])]
    lg = build_lane_graph([agent(0, 0)], lines, spacing=2, k=10)
    assert lg.num_env == 2
    assert sorted(lg.neighbors_of(0).tolist()) == [0, 1]


def test_lane_graph_empty_polylines():
    lg = build_lane_graph([agent(0, 0)], [], spacing=2, k=4)
    assert lg.num_env == 0 and lg.edge_index.shape == (2, 0)


def test_resample_count_endpoint_inclusive():
    pts = resample_polyline(np.array([[0.0, 0.0], [10.0, 0.0]]), 2.0)
    assert len(pts) == 6
    assert np.allclose(pts[:, 0], [0, 2, 4, 6, 8, 10])


def test_lane_edges_point_env_to_agent_and_k_each():
    states = [agent(0, 0, aid=0), agent(10, 3, aid=1)]
    lg = build_lane_graph(states, straight_road_polylines(), spacing=2, k=4)
    src, dst = lg.edge_index
    assert np.all(src < lg.num_env) and np.all(dst < len(states))
    assert np.bincount(dst).tolist() == [4, 4]
    for a in range(2):
        d = np.linalg.norm(lg.env_positions - lg.agent_positions[a], axis=1)
        assert np.allclose(np.sort(d)[:4], np.sort(lg.edge_attr[dst == a]))


# ---- CSV loading ------------------------------------------------------------

def _write_single_agent(path, seconds=8.0, rate=25, speed=20.0, with_kin=True):
    n = int(round(seconds * rate))
    t = np.arange(n) / rate
    lines = [f"# rate_hz={rate}"]
    header = "frame,agent_id,agent_class,x,y" + (",vx,vy,ax,ay,psi" if with_kin else "")
    lines.append(header)
    for i in range(n):
        row = f"{i},7,vehicle,{speed * t[i]:.6f},1.875"
        if with_kin:
            row += f",{speed},0,0,0,0"
        lines.append(row)
    path.write_text("\n".join(lines) + "\n")
    return path


def test_csv_eight_seconds_gives_one_sample(tmp_path):
    samples = load_scene_csv(_write_single_agent(tmp_path / "a.csv"))
    assert len(samples) == 1
    s = samples[0]
    assert s.future.shape == (1, 25, 2)
    assert s.condition.history.length == 15
    # downsampled to 0.2 s: consecutive future points are 20 m/s * 0.2 s apart
    assert np.allclose(np.diff(s.future[0, :, 0]), 4.0)


def test_csv_reconstructs_missing_kinematics(tmp_path):
    s = load_scene_csv(_write_single_agent(tmp_path / "a.csv", with_kin=False))[0]
    assert s.init_states[0].vx == pytest.approx(20.0)
    assert s.init_states[0].ax == pytest.approx(0.0, abs=1e-6)


def test_csv_empty_file(tmp_path):
    p = tmp_path / "empty.csv"
    p.write_text("")
    assert load_scene_csv(p) == []


def test_csv_missing_column(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("# rate_hz=25\nframe,agent_id,x,y\n0,1,0,0\n")
    with pytest.raises(SceneFormatError):
        load_scene_csv(p)


def test_csv_non_monotone_frames(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("# rate_hz=25\nframe,agent_id,agent_class,x,y\n5,1,vehicle,0,0\n0,1,vehicle,1,0\n")
    with pytest.raises(SceneDataError):
        load_scene_csv(p)


def test_csv_truncation_commutes(tmp_path):
    """Cutting the raw recording to the window support yields the same sample."""
    full = load_scene_csv(_write_single_agent(tmp_path / "a.csv", seconds=12), stride=1)
    p = tmp_path / "b.csv"
    lines = (tmp_path / "a.csv").read_text().splitlines()
    # keep frames 25..224 (the second window at stride 1 starts at downsampled step 1 = frame 5)
    body = [ln for ln in lines[2:] if 5 <= int(ln.split(",")[0]) < 205]
    p.write_text("\n".join(lines[:2] + body) + "\n")
    part = load_scene_csv(p, stride=1)
    assert len(part) == 1
    assert np.array_equal(part[0].future, full[1].future)
    assert np.array_equal(part[0].condition.history.features, full[1].condition.history.features)


def test_polyline_roundtrip(tmp_path):
    lines = straight_road_polylines()
    save_polylines(tmp_path / "l.json", lines)
    back = load_polylines(tmp_path / "l.json")
    assert [b.line_type for b in back] == [a.line_type for a in lines]
    assert all(np.array_equal(a.points, b.points) for a, b in zip(lines, back))


def test_synthetic_csv_roundtrip(tmp_path):
    tr = generate_synthetic_tracks("straight_lane_change", 1, 4)[0]
    write_scene_csv(tmp_path / "s.csv", tr.agent_ids, tr.classes, tr.kin, tr.present, 5.0)
    loaded = load_scene_csv(tmp_path / "s.csv", "highway", tr.polylines)
    direct = generate_synthetic_scenes("straight_lane_change", 1, 4)
    assert len(loaded) == 1
    assert np.allclose(loaded[0].future, direct[0].future, atol=1e-8)


# ---- synthetic generator ----------------------------------------------------

def test_synthetic_deterministic():
    a = generate_synthetic_scenes("straight_lane_change", 4, 11)
    b = generate_synthetic_scenes("straight_lane_change", 4, 11)
    for x, y in zip(a, b):
        assert np.array_equal(x.future, y.future)
        assert np.array_equal(x.condition.history.features, y.condition.history.features)


def test_synthetic_constant_speed_displacement():
    scenes = generate_synthetic_scenes("straight_lane_change", 30, 2)
    const = [s for s in scenes if s.meta.get("constant_speed")]
    assert const
    for s in const:
        v = s.init_velocity[:, 0]
        disp = s.future[:, -1, 0] - s.anchor[:, 0]
        assert np.allclose(disp, v * 5.0, atol=1e-6)


def test_synthetic_circle_radius():
    for s in generate_synthetic_scenes("circular_roundabout", 10, 1):
        r = np.linalg.norm(s.future[s.target_mask], axis=-1)
        assert np.all(np.abs(r - ROUNDABOUT_RADIUS) <= 0.5)


def test_synthetic_velocities_are_finite_differences():
    tr = generate_synthetic_tracks("straight_lane_change", 1, 0)[0]
    kin = tr.kin[0]
    vx = np.gradient(kin[:, 0], 0.2)
    assert np.allclose(kin[:, 2], vx, atol=1e-9)


def test_synthetic_invalid():
    with pytest.raises(ValueError):
        generate_synthetic_scenes("straight_lane_change", 0, 0)
    with pytest.raises(ValueError):
        generate_synthetic_scenes("nope", 1, 0)
