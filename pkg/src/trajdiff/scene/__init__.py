"""Scene ingestion, graph construction and synthetic data."""
from .assemble import GraphConfig, assemble_sample, kinematics_from_positions
from .graphs import (
    FeatureProfile,
    build_interaction_graph,
    build_lane_graph,
    highway_features,
    lane_node_features,
    resample_polyline,
)
from .io import (
    SceneDataError,
    SceneFormatError,
    load_dataset_dir,
    load_polylines,
    load_scene_csv,
    save_polylines,
    write_scene_csv,
)
from .synthetic import generate_synthetic_scenes, generate_synthetic_tracks
from .types import (
    HISTORY_STEPS,
    HORIZON_STEPS,
    SAMPLE_DT,
    AgentClass,
    AgentState,
    Condition,
    LaneGraph,
    ObservationWindow,
    Polyline,
    Sample,
    SceneGraph,
    wrap_angle,
)
