"""Collate samples into disjoint-union graph batches for the denoiser."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
import torch

from .scene.graphs import LANE_FEATURES, lane_node_features
from .scene.types import Sample

STD_FLOOR = 0.1


@dataclass
class FeatureStats:
    """Dataset-level normalization constants, fitted once and stored with the model."""

    mean: np.ndarray
    std: np.ndarray
    offset_scale: np.ndarray
    distance_scale: float = 10.0

    @classmethod
    def fit(cls, samples: Sequence[Sample]) -> "FeatureStats":
        feats = np.concatenate([s.condition.history.features[s.condition.history.presence] for s in samples])
        offsets = np.concatenate([(s.future - s.anchor[:, None, :])[s.target_mask].reshape(-1, 2)
                                  for s in samples] or [np.zeros((1, 2))])
        return cls(
            mean=feats.mean(0),
            std=np.maximum(feats.std(0), STD_FLOOR),
            offset_scale=np.maximum(np.sqrt((offsets ** 2).mean(0)), 1.0),
        )

    @classmethod
    def identity(cls, num_features: int) -> "FeatureStats":
        return cls(np.zeros(num_features), np.ones(num_features), np.ones(2), 1.0)

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist(),
                "offset_scale": self.offset_scale.tolist(), "distance_scale": self.distance_scale}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureStats":
        return cls(np.asarray(d["mean"], float), np.asarray(d["std"], float),
                   np.asarray(d["offset_scale"], float), float(d["distance_scale"]))


@dataclass
class SampleArrays:
    """Normalized numpy view of one sample, ready to be concatenated."""

    feat: np.ndarray
    present: np.ndarray
    edges: list
    lane_env: Optional[np.ndarray]
    lane_edges: Optional[np.ndarray]
    lane_dist: Optional[np.ndarray]
    anchor: np.ndarray
    vel: np.ndarray
    classes: np.ndarray
    future: np.ndarray
    target: np.ndarray


def prepare(sample: Sample, stats: FeatureStats) -> SampleArrays:
    hist = sample.condition.history
    feat = np.where(hist.presence[..., None], (hist.features - stats.mean) / stats.std, 0.0)
    lane = sample.condition.lane
    lane_env = lane_edges = lane_dist = None
    if lane is not None:
        lane_env = lane_node_features(lane)
        lane_env[:, :2] = (lane_env[:, :2] - stats.mean[:2]) / stats.std[:2]
        lane_edges = lane.edge_index
        lane_dist = lane.edge_attr / stats.distance_scale
    return SampleArrays(
        feat=feat,
        present=hist.presence,
        edges=[(ei, d / stats.distance_scale) for ei, d in hist.edges],
        lane_env=lane_env,
        lane_edges=lane_edges,
        lane_dist=lane_dist,
        anchor=sample.anchor,
        vel=sample.init_velocity,
        classes=sample.classes,
        future=sample.future,
        target=sample.target_mask,
    )


@dataclass
class Batch:
    """A disjoint union of samples.

    History tensors are right-aligned so index -1 is the prediction instant
    for every sample. The lane graph (when present) lives on a combined node
    set: environmental nodes first, then one node per agent.
    """

    hist_feat: torch.Tensor
    hist_present: torch.Tensor
    hist_edges: list
    anchor: torch.Tensor
    init_vel: torch.Tensor
    classes: torch.Tensor
    sample_index: torch.Tensor
    num_samples: int
    future: torch.Tensor
    target_mask: torch.Tensor
    lane_env: Optional[torch.Tensor] = None
    lane_edge_index: Optional[torch.Tensor] = None
    lane_edge_attr: Optional[torch.Tensor] = None
    lane_nbr: Optional[torch.Tensor] = None
    interactions: bool = True
    meta: list = field(default_factory=list)

    @property
    def num_agents(self) -> int:
        return self.anchor.shape[0]

    @property
    def horizon(self) -> int:
        return self.future.shape[1]

    @property
    def dtype(self) -> torch.dtype:
        return self.anchor.dtype

    def without_interactions(self) -> "Batch":
        """The condition c' whose history graphs keep self-loops only."""
        return self.drop_interactions(torch.ones(self.num_samples, dtype=torch.bool))

    def drop_interactions(self, drop: torch.Tensor) -> "Batch":
        """Strip inter-agent edges of the samples flagged in ``drop``."""
        agent_drop = drop[self.sample_index]
        edges = []
        for ei, ea in self.hist_edges:
            src, dst = ei
            keep = (src == dst) | ~agent_drop[dst]
            edges.append((ei[:, keep], ea[keep]))
        return replace(self, hist_edges=edges, interactions=not bool(drop.all()))

    def to(self, dtype: torch.dtype) -> "Batch":
        conv = {}
        for name in ("hist_feat", "anchor", "init_vel", "future", "lane_env", "lane_edge_attr"):
            val = getattr(self, name)
            conv[name] = None if val is None else val.to(dtype)
        conv["hist_edges"] = [(ei, ea.to(dtype)) for ei, ea in self.hist_edges]
        return replace(self, **conv)


def collate(items: Sequence, stats: Optional[FeatureStats] = None, dtype: torch.dtype = torch.float32) -> Batch:
    """Build a :class:`Batch` from samples or prepared :class:`SampleArrays`."""
    arrays = [it if isinstance(it, SampleArrays) else prepare(it, stats) for it in items]
    metas = [getattr(it, "meta", {}) for it in items]
    if not arrays:
        raise ValueError("cannot collate an empty batch")
    h = max(a.feat.shape[0] for a in arrays)
    n_feat = arrays[0].feat.shape[2]
    sizes = [a.anchor.shape[0] for a in arrays]
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    total = int(offsets[-1])

    feat = np.zeros((h, total, n_feat))
    present = np.zeros((h, total), dtype=bool)
    step_edges = [([], []) for _ in range(h)]
    for a, off in zip(arrays, offsets):
        hs, n = a.feat.shape[:2]
        feat[h - hs:, off:off + n] = a.feat
        present[h - hs:, off:off + n] = a.present
        for i, (ei, d) in enumerate(a.edges):
            step_edges[h - hs + i][0].append(ei + off)
            step_edges[h - hs + i][1].append(d)
    hist_edges = []
    for eis, ds in step_edges:
        ei = np.concatenate(eis, axis=1) if eis else np.zeros((2, 0), dtype=np.int64)
        d = np.concatenate(ds) if ds else np.zeros(0)
        hist_edges.append((torch.as_tensor(ei, dtype=torch.long), torch.as_tensor(d, dtype=dtype).unsqueeze(-1)))

    batch = Batch(
        hist_feat=torch.as_tensor(feat, dtype=dtype),
        hist_present=torch.as_tensor(present),
        hist_edges=hist_edges,
        anchor=torch.as_tensor(np.concatenate([a.anchor for a in arrays]), dtype=dtype),
        init_vel=torch.as_tensor(np.concatenate([a.vel for a in arrays]), dtype=dtype),
        classes=torch.as_tensor(np.concatenate([a.classes for a in arrays]), dtype=torch.long),
        sample_index=torch.as_tensor(np.repeat(np.arange(len(arrays)), sizes), dtype=torch.long),
        num_samples=len(arrays),
        future=torch.as_tensor(np.concatenate([a.future for a in arrays]), dtype=dtype),
        target_mask=torch.as_tensor(np.concatenate([a.target for a in arrays])),
        meta=metas,
    )
    if all(a.lane_env is not None for a in arrays):
        _attach_lanes(batch, arrays, offsets, dtype)
    return batch


def _attach_lanes(batch: Batch, arrays: Sequence[SampleArrays], offsets: np.ndarray, dtype) -> None:
    env_sizes = [a.lane_env.shape[0] for a in arrays]
    env_off = np.concatenate([[0], np.cumsum(env_sizes)])
    n_env, n_agents = int(env_off[-1]), int(offsets[-1])
    env = np.concatenate([a.lane_env for a in arrays]) if n_env else np.zeros((0, LANE_FEATURES))
    src, dst = [], []
    nbrs = [[] for _ in range(n_agents)]
    for a, eo, ao in zip(arrays, env_off, offsets):
        s, d = a.lane_edges
        src.append(s + eo)
        dst.append(d + ao)
        for si, di in zip(s + eo, d + ao):
            nbrs[di].append(si)
    src = np.concatenate(src) if src else np.zeros(0, dtype=np.int64)
    dst = np.concatenate(dst) if dst else np.zeros(0, dtype=np.int64)
    loops = np.arange(n_env + n_agents)
    edge_index = np.stack([np.concatenate([src, loops]), np.concatenate([dst + n_env, loops])])
    dist = np.concatenate([a.lane_dist for a in arrays] + [np.zeros(len(loops))])
    width = max(1, max(len(n) for n in nbrs))
    nbr = np.full((n_agents, width), -1, dtype=np.int64)
    for i, n in enumerate(nbrs):
        nbr[i, :len(n)] = n
    batch.lane_env = torch.as_tensor(env, dtype=dtype)
    batch.lane_edge_index = torch.as_tensor(edge_index, dtype=torch.long)
    batch.lane_edge_attr = torch.as_tensor(dist, dtype=dtype).unsqueeze(-1)
    batch.lane_nbr = torch.as_tensor(nbr)
