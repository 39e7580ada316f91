"""ADE/FDE/MR under the mean-of-samples protocol, guidance sweeps and reports."""
from __future__ import annotations

import csv
import logging
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch

from . import kernels
from .batching import FeatureStats, collate
from .diffusion import DiffusionSchedule, sample_trajectories
from .predictor import CachedDenoiser, DiffusionPredictor
from .refinement import PursuitConfig, initial_yaw, refine_batch

logger = logging.getLogger(__name__)

MISS_THRESHOLD = 2.0
VARIANTS = ("full", "no_motion_model", "refined")
REPORT_COLUMNS = ("variant", "w", "ade", "fde", "mr", "n_scenes")


class VariantMismatch(ValueError):
    pass


def _pair(pred, truth):
    pred, truth = np.asarray(pred, dtype=np.float64), np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ValueError(f"prediction {pred.shape} and ground truth {truth.shape} differ in shape")
    return pred, truth


def ade(pred, truth) -> float:
    return float(kernels.displacement_errors(*_pair(pred, truth)).mean())


def fde(pred, truth) -> float:
    pred, truth = _pair(pred, truth)
    return float(kernels.displacement_errors(pred[-1:], truth[-1:])[0])


def miss(pred, truth, threshold: float = MISS_THRESHOLD) -> bool:
    """True when the final-step error strictly exceeds ``threshold``."""
    return fde(pred, truth) > threshold


@dataclass
class MetricsRecord:
    ade: float
    fde: float
    mr: float
    n_scenes: int
    n_agents: int
    n_samples: int
    w: float
    variant: str = "full"
    per_class: dict = field(default_factory=dict)
    per_dataset: dict = field(default_factory=dict)

    def row(self) -> dict:
        return {"variant": self.variant, "w": f"{self.w:.1f}", "ade": f"{self.ade:.4f}",
                "fde": f"{self.fde:.4f}", "mr": f"{self.mr:.4f}", "n_scenes": self.n_scenes}

    def to_dict(self) -> dict:
        return asdict(self)


def _aggregate(errors: dict, n_samples: int, w: float, variant: str) -> MetricsRecord:
    """errors: scene -> list of (class, dataset, ade, fde, miss); agents then scenes."""
    if not errors:
        raise ValueError("no target agents to score")
    scenes = sorted(errors)
    per_scene = np.array([np.mean([r[2:] for r in errors[s]], axis=0) for s in scenes])
    groups = {"per_class": defaultdict(list), "per_dataset": defaultdict(list)}
    for s in scenes:
        for cls, ds, *vals in errors[s]:
            groups["per_class"][cls].append(vals)
            groups["per_dataset"][ds].append(vals)
    breakdown = {k: {g: dict(zip(("ade", "fde", "mr"), np.mean(v, axis=0).tolist())) for g, v in sorted(d.items())}
                 for k, d in groups.items()}
    ade_, fde_, mr_ = per_scene.mean(axis=0)
    return MetricsRecord(float(ade_), float(fde_), float(mr_), len(scenes),
                         sum(len(v) for v in errors.values()), n_samples, float(w), variant, **breakdown)


def _resolve(model, variant: str):
    from .training import Checkpoint
    if isinstance(model, (str, Path)):
        model = Checkpoint.load(model)
    if isinstance(model, Checkpoint):
        model = model.build_model()
    if variant not in VARIANTS:
        raise VariantMismatch(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    if isinstance(model, DiffusionPredictor):
        has_f = model.config.use_motion_model
        if variant == "no_motion_model" and has_f:
            raise VariantMismatch("variant no_motion_model needs a checkpoint trained with use_motion_model=false")
        if variant in ("full", "refined") and not has_f:
            raise VariantMismatch(f"variant {variant} needs a checkpoint trained with the motion model")
    return model


def _scene_key(meta: dict, index: int):
    return meta.get("scene_id", index)


def predict(model, dataset: Sequence, schedule: DiffusionSchedule, w: float = 1.0, n_samples: int = 6,
            seed: int = 0, stats: Optional[FeatureStats] = None, chunk: int = 64) -> list:
    """Per scene, an (n_samples, A, N, 2) array of sampled trajectories.

    Noise streams are keyed by (seed, chunk, sample index), so draws are paired
    across guidance weights for the same dataset order.
    """
    if isinstance(model, DiffusionPredictor):
        stats = model.stats
        model.eval()
        denoiser = CachedDenoiser(model)
    else:
        denoiser = model
    if stats is None:
        stats = FeatureStats.identity(dataset[0].condition.history.features.shape[-1])
    out = []
    with torch.no_grad():
        for start in range(0, len(dataset), chunk):
            scenes = dataset[start:start + chunk]
            batch = collate(scenes, stats)
            c_prime = batch.without_interactions() if w < 1.0 else None
            draws = sample_trajectories(denoiser, batch, batch.anchor, schedule, n_samples,
                                        seed + start, w=w, horizon=batch.horizon, c_prime=c_prime)
            stacked = torch.stack(draws).double().numpy()
            sizes = np.cumsum([0] + [s.num_agents for s in scenes])
            out += [stacked[:, a:b] for a, b in zip(sizes[:-1], sizes[1:])]
    return out


def score(samples: Sequence, dataset: Sequence, w: float, variant: str = "full",
          pursuit: Optional[PursuitConfig] = None, dt: float = 0.2) -> MetricsRecord:
    """Average each agent's samples pointwise and score it against the ground truth."""
    errors = {}
    n_samples = 0
    for i, (draws, sample) in enumerate(zip(samples, dataset)):
        n_samples = draws.shape[0]
        if variant == "refined":
            draws = refine_samples(draws, sample, pursuit or PursuitConfig(), dt)
        mean = draws.mean(axis=0)
        rows = []
        for a in np.flatnonzero(sample.target_mask):
            cls = "pedestrian" if sample.classes[a] == 1 else "vehicle"
            f = fde(mean[a], sample.future[a])
            rows.append((cls, sample.meta.get("kind", "default"), ade(mean[a], sample.future[a]), f,
                         float(f > MISS_THRESHOLD)))
        if rows:
            errors[_scene_key(sample.meta, i)] = rows
    return _aggregate(errors, n_samples, w, variant)


def refine_samples(draws: np.ndarray, sample, pursuit: PursuitConfig, dt: float = 0.2) -> np.ndarray:
    """Pure-pursuit refinement of vehicle trajectories in (S, A, N, 2) draws."""
    out = draws.copy()
    vehicles = np.flatnonzero(sample.classes == 0)
    if len(vehicles) == 0:
        return out
    for s in range(draws.shape[0]):
        refs = draws[s, vehicles]
        starts = sample.anchor[vehicles]
        yaws = initial_yaw(sample.init_velocity[vehicles], refs, starts)
        out[s, vehicles] = refine_batch(refs, starts, yaws, pursuit, dt)
    return out


def evaluate(model, dataset: Sequence, schedule: DiffusionSchedule = DiffusionSchedule(), w: float = 1.0,
             n_samples: int = 6, seed: int = 0, variant: str = "full",
             pursuit: Optional[PursuitConfig] = None, stats: Optional[FeatureStats] = None) -> MetricsRecord:
    """Mean-of-``n_samples`` ADE/FDE/MR, averaged over agents within a scene, then over scenes."""
    if len(dataset) == 0:
        raise ValueError("evaluation dataset is empty")
    model = _resolve(model, variant)
    samples = predict(model, dataset, schedule, w, n_samples, seed, stats)
    dt = model.config.dt if isinstance(model, DiffusionPredictor) else 0.2
    return score(samples, dataset, w, variant, pursuit, dt)


def guidance_sweep(model, dataset: Sequence, weights: Sequence[float], schedule: DiffusionSchedule = DiffusionSchedule(),
                   n_samples: int = 6, seed: int = 0, variant: str = "full",
                   pursuit: Optional[PursuitConfig] = None) -> list:
    """One seed-paired :func:`evaluate` per guidance weight."""
    bad = [w for w in weights if not 0.0 <= w <= 1.0]
    if bad:
        raise ValueError(f"guidance weights must lie in [0, 1]: {bad}")
    model = _resolve(model, variant)
    return [evaluate(model, dataset, schedule, w, n_samples, seed, variant, pursuit) for w in weights]


def format_report(records: Sequence[MetricsRecord]) -> str:
    lines = [f"{'model':<28}{'ADE':>8}{'FDE':>8}{'MR':>8}{'scenes':>8}"]
    for r in records:
        label = {"full": "ours", "no_motion_model": "ours without f", "refined": "ours refined"}[r.variant]
        lines.append(f"{label + f' (w={r.w:.1f})':<28}{r.ade:>8.3f}{r.fde:>8.3f}{r.mr:>8.3f}{r.n_scenes:>8d}")
        for cls, m in r.per_class.items():
            lines.append(f"  {cls:<26}{m['ade']:>8.3f}{m['fde']:>8.3f}{m['mr']:>8.3f}")
    return "\n".join(lines)


def write_table(records: Sequence[MetricsRecord], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS)
        writer.writeheader()
        for r in records:
            writer.writerow(r.row())
    return path
