"""Static SVG figures: agent boxes, ground truth, sampled trajectories and lanes."""
from __future__ import annotations

from pathlib import Path
from typing import Mapping

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.patches import Circle, Polygon  # noqa: E402

VEHICLE_SIZE = (4.5, 1.8)
PEDESTRIAN_RADIUS = 0.4
LANE_STYLE = {"boundary": ("0.25", "-"), "lane_line": ("0.55", "--"), "centerline": ("0.75", ":")}


def _box(x, y, yaw, length, width):
    c, s = np.cos(yaw), np.sin(yaw)
    corners = np.array([[1, 1], [1, -1], [-1, -1], [-1, 1]]) * [length / 2, width / 2]
    return corners @ np.array([[c, s], [-s, c]]) + [x, y]


def draw_scene(ax, sample, draws: np.ndarray, title: str = "") -> int:
    """Draw one panel; returns the number of scatter sequences drawn."""
    for line in sample.polylines:
        color, style = LANE_STYLE.get(line.line_type, ("0.5", "-"))
        ax.plot(line.points[:, 0], line.points[:, 1], color=color, linestyle=style, linewidth=0.8, zorder=1)
    colors = plt.get_cmap("tab10")
    n_seq = 0
    for a in range(sample.num_agents):
        color = colors(a % 10)
        x, y = sample.anchor[a]
        vx, vy = sample.init_velocity[a]
        if sample.classes[a] == 1:
            ax.add_patch(Circle((x, y), PEDESTRIAN_RADIUS, facecolor=color, edgecolor="k", zorder=4))
        else:
            ax.add_patch(Polygon(_box(x, y, np.arctan2(vy, vx), *VEHICLE_SIZE), closed=True,
                                 facecolor=color, edgecolor="k", alpha=0.8, zorder=4))
        if not sample.target_mask[a]:
            continue
        truth = np.vstack([sample.anchor[a], sample.future[a]])
        ax.plot(truth[:, 0], truth[:, 1], color=color, linewidth=1.5, zorder=3)
        for s in range(draws.shape[0]):
            ax.scatter(draws[s, a, :, 0], draws[s, a, :, 1], s=4, color=color, alpha=0.5, zorder=2)
            n_seq += 1
    ax.set_aspect("equal", adjustable="datalim")
    ax.set_title(title, fontsize=9)
    ax.tick_params(labelsize=7)
    return n_seq


def _limits(sample, draws_by_w):
    pts = [sample.anchor, sample.future.reshape(-1, 2)] + [d.reshape(-1, 2) for d in draws_by_w.values()]
    pts = np.vstack(pts)
    lo, hi = pts.min(0) - 5.0, pts.max(0) + 5.0
    return lo, hi


def plot_guidance_panels(sample, draws_by_w: Mapping[float, np.ndarray], path) -> Path:
    """One figure with a side-by-side panel per guidance weight."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    weights = list(draws_by_w)
    lo, hi = _limits(sample, draws_by_w)
    span = hi - lo
    panel_w = 5.0
    panel_h = float(np.clip(panel_w * span[1] / max(span[0], 1e-6), 1.5, 6.0))
    fig, axes = plt.subplots(1, len(weights), figsize=(panel_w * len(weights), panel_h + 0.6), squeeze=False)
    for ax, w in zip(axes[0], weights):
        draw_scene(ax, sample, draws_by_w[w], f"w = {w:.1f}")
        ax.set_xlim(lo[0], hi[0])
        ax.set_ylim(lo[1], hi[1])
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path
