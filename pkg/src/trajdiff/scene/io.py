"""Scene CSV and lane-polyline file formats.

Scene CSV: a header line ``# rate_hz=<float>`` followed by comma-separated
records with columns ``frame, agent_id, agent_class, x, y`` and optionally
``vx, vy, ax, ay, psi``. Missing or blank kinematic cells are reconstructed
from positions by central differences.

Polylines: UTF-8 JSON ``{"polylines": [{"line_type": str, "points": [[x, y], ...]}, ...]}``.
"""
from __future__ import annotations

import io
import json
import logging
import re
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from .assemble import GraphConfig, assemble_sample, finite_difference
from .graphs import FeatureProfile
from .types import HISTORY_STEPS, HORIZON_STEPS, SAMPLE_DT, Polyline, Sample

logger = logging.getLogger(__name__)

REQUIRED_COLUMNS = ("frame", "agent_id", "agent_class", "x", "y")
KINEMATIC_COLUMNS = ("vx", "vy", "ax", "ay", "psi")
_RATE_RE = re.compile(r"^\s*#\s*rate_hz\s*[=:]\s*([0-9.eE+-]+)\s*$")


class SceneFormatError(ValueError):
    """The file does not follow the scene CSV layout."""


class SceneDataError(ValueError):
    """The file parses but its contents are inconsistent."""


def _as_profile(profile) -> FeatureProfile:
    return profile if isinstance(profile, FeatureProfile) else FeatureProfile(str(profile))


def load_polylines(path) -> list:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    records = data["polylines"] if isinstance(data, dict) else data
    try:
        return [Polyline(r["line_type"], np.asarray(r["points"], dtype=float)) for r in records]
    except (KeyError, TypeError, ValueError) as exc:
        raise SceneFormatError(f"{path}: malformed polyline record ({exc})") from exc


def save_polylines(path, polylines: Iterable[Polyline]) -> None:
    records = [{"line_type": p.line_type, "points": p.points.tolist()} for p in polylines]
    Path(path).write_text(json.dumps({"polylines": records}, indent=1), encoding="utf-8")


def read_scene_table(path) -> tuple:
    """Return (rate_hz, DataFrame) or (None, None) for an empty file."""
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not any(line.strip() for line in lines):
        return None, None
    match = _RATE_RE.match(lines[0])
    if match is None:
        raise SceneFormatError(f"{path}: first line must declare the recording rate as '# rate_hz=<Hz>'")
    rate = float(match.group(1))
    body = "\n".join(lines[1:])
    if not body.strip():
        return rate, None
    df = pd.read_csv(io.StringIO(body), skipinitialspace=True)
    missing = [c for c in REQUIRED_COLUMNS if c not in df.columns]
    if missing:
        raise SceneFormatError(f"{path}: missing column(s) {missing}")
    if len(df) and not np.all(np.diff(df["frame"].to_numpy()) >= 0):
        raise SceneDataError(f"{path}: frame index is not monotone")
    return rate, df


def _agent_kinematics(rows: pd.DataFrame, rate: float) -> np.ndarray:
    frames = rows["frame"].to_numpy()
    if len(np.unique(frames)) != len(frames):
        raise SceneDataError(f"agent {rows['agent_id'].iloc[0]!r} has duplicate frames")
    t = frames / rate
    pos = rows[["x", "y"]].to_numpy(dtype=float)
    cols = {c: (rows[c].to_numpy(dtype=float) if c in rows else np.full(len(rows), np.nan))
            for c in KINEMATIC_COLUMNS}

    def fill(name, derived):
        vals = cols[name]
        bad = ~np.isfinite(vals)
        vals[bad] = derived[bad]
        return vals

    if len(t) > 1:
        vel = np.gradient(pos, t, axis=0)
    else:
        vel = np.zeros_like(pos)
    vx, vy = fill("vx", vel[:, 0]), fill("vy", vel[:, 1])
    if len(t) > 1:
        acc = np.gradient(np.stack([vx, vy], 1), t, axis=0)
    else:
        acc = np.zeros_like(pos)
    ax, ay = fill("ax", acc[:, 0]), fill("ay", acc[:, 1])
    psi = fill("psi", np.arctan2(vy, vx))
    return np.stack([pos[:, 0], pos[:, 1], vx, vy, ax, ay, psi], axis=1)


def load_scene_csv(path, profile="highway", polylines: Sequence[Polyline] = (),
                   graph_cfg: GraphConfig = GraphConfig(), stride: int = 5,
                   history: int = HISTORY_STEPS, horizon: int = HORIZON_STEPS,
                   dt: float = SAMPLE_DT) -> list:
    """Read one recording and cut it into (history, future) samples.

    The recording is downsampled to ``dt`` spacing; prediction instants are
    taken every ``stride`` downsampled steps starting at the first instant
    with a full history window.
    """
    profile = _as_profile(profile)
    rate, df = read_scene_table(path)
    if df is None or len(df) == 0:
        return []
    factor = rate * dt
    if factor < 1 - 1e-9 or abs(factor - round(factor)) > 1e-6:
        raise SceneDataError(f"{path}: rate {rate} Hz is not an integer multiple of 1/{dt} s")
    factor = int(round(factor))

    f0 = int(df["frame"].min())
    n_steps = (int(df["frame"].max()) - f0) // factor + 1
    agent_ids = list(dict.fromkeys(df["agent_id"].tolist()))
    kin = np.zeros((len(agent_ids), n_steps, 7))
    present = np.zeros((len(agent_ids), n_steps), dtype=bool)
    classes = []
    for a, aid in enumerate(agent_ids):
        rows = df[df["agent_id"] == aid]
        classes.append(rows["agent_class"].iloc[0])
        full = _agent_kinematics(rows, rate)
        frames = rows["frame"].to_numpy().astype(int)
        keep = (frames - f0) % factor == 0
        k = (frames[keep] - f0) // factor
        kin[a, k] = full[keep]
        present[a, k] = True

    samples = []
    for k0 in range(history - 1, n_steps - horizon, max(1, stride)):
        s = assemble_sample(agent_ids, classes, kin, present, k0, profile, polylines, graph_cfg,
                            history, horizon, meta={"source": str(path), "frame": f0 + k0 * factor})
        if s is not None:
            samples.append(s)
    logger.debug("%s: %d samples", path, len(samples))
    return samples


def write_scene_csv(path, agent_ids: Sequence, classes: Sequence, kin: np.ndarray,
                    present: np.ndarray, rate_hz: float) -> None:
    """Write (A, K, 7) tracks as a scene CSV with one frame per sample step."""
    rows = []
    for a, aid in enumerate(agent_ids):
        for k in np.flatnonzero(present[a]):
            rows.append((int(k), aid, str(getattr(classes[a], "value", classes[a])), *kin[a, k]))
    rows.sort(key=lambda r: (r[0], str(r[1])))
    df = pd.DataFrame(rows, columns=["frame", "agent_id", "agent_class", "x", "y", *KINEMATIC_COLUMNS])
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# rate_hz={rate_hz:g}\n")
        df.to_csv(fh, index=False, float_format="%.10g")


def load_dataset_dir(path, profile="highway", graph_cfg: GraphConfig = GraphConfig(), stride: int = 5) -> list:
    """Load every ``*.csv`` under ``path``; a sibling ``<name>.lanes.json`` supplies polylines."""
    path = Path(path)
    files = sorted(path.glob("*.csv")) if path.is_dir() else [path]
    if not files:
        raise FileNotFoundError(f"no scene CSV files under {path}")
    samples = []
    for f in files:
        lanes = f.with_suffix(".lanes.json")
        polylines = load_polylines(lanes) if lanes.exists() else ()
        for s in load_scene_csv(f, profile, polylines, graph_cfg, stride):
            s.meta.setdefault("scene_id", f.stem if s.meta.get("frame") is None else f"{f.stem}@{s.meta['frame']}")
            samples.append(s)
    return samples


__all__ = [
    "SceneFormatError", "SceneDataError", "load_scene_csv", "load_polylines", "save_polylines",
    "write_scene_csv", "load_dataset_dir", "finite_difference",
]
