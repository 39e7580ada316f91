"""Denoising objective, training loop and checkpoints."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
import torch

from .batching import Batch, FeatureStats, collate, prepare
from .diffusion import DiffusionSchedule, forward_diffuse, linear_gamma
from .predictor import DiffusionPredictor, ModelConfig

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "trajdiff-checkpoint"
CHECKPOINT_VERSION = (1, 0)


class TrainingDivergence(FloatingPointError):
    def __init__(self, step: int, last_loss: float):
        super().__init__(f"loss became non-finite at step {step} (last finite loss {last_loss:.6g}); "
                         "try a lower learning rate or tighter gradient clipping")
        self.step = step


@dataclass
class TrainConfig:
    lr: float = 5e-4
    weight_decay: float = 1e-2
    batch_size: int = 16
    repeats: int = 1
    steps: int = 2000
    p_drop: float = 0.2
    grad_clip: Optional[float] = 1.0
    ped_velocity_weight: float = 0.1
    eval_every: int = 0
    eval_samples: int = 6
    threads: int = 1

    def __post_init__(self):
        if not 0.0 <= self.p_drop < 1.0:
            raise ValueError("p_drop must lie in [0, 1)")
        if self.lr < 0 or self.batch_size < 1 or self.repeats < 1 or self.steps < 0:
            raise ValueError("invalid training configuration")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


@dataclass
class LossCounters:
    """How often the full condition c and the stripped condition c' were used."""
    full: int = 0
    dropped: int = 0
    built_c_prime: int = 0


def _denoise(model, x_t, t, batch):
    if hasattr(model, "denoise"):
        return model.denoise(x_t, t, batch)
    return model(x_t, t, batch), None


def training_loss(batch: Batch, model: Callable, rng: torch.Generator, p_drop: float = 0.2,
                  gamma: Callable = linear_gamma, counters: Optional[LossCounters] = None,
                  ped_velocity_weight: float = 0.0, dt: float = 0.2) -> torch.Tensor:
    """Clean-signal regression loss on a batch.

    Each sample draws its own t ~ U(0, 1) and, with probability ``p_drop``,
    is conditioned on its interaction-free history instead of the full one.
    The loss is the mean squared error over target agents, steps and
    coordinates.
    """
    if batch.num_samples == 0:
        raise ValueError("empty batch")
    if not 0.0 <= p_drop <= 1.0:
        raise ValueError("p_drop must lie in [0, 1]")
    dtype = batch.dtype
    t_sample = torch.rand(batch.num_samples, generator=rng, dtype=dtype)
    t = t_sample[batch.sample_index]
    noise = torch.randn(batch.future.shape, generator=rng, dtype=dtype)
    x_t = forward_diffuse(batch.future, batch.anchor, t.view(-1, 1, 1), noise, gamma)

    cond = batch
    if p_drop > 0:
        drop = torch.rand(batch.num_samples, generator=rng) < p_drop
        if bool(drop.any()):
            cond = batch.drop_interactions(drop)
            if counters is not None:
                counters.built_c_prime += 1
        n_drop = int(drop.sum())
    else:
        n_drop = 0
    if counters is not None:
        counters.dropped += n_drop
        counters.full += batch.num_samples - n_drop

    x0_hat, controls = _denoise(model, x_t, t, cond)
    mask = batch.target_mask
    if not bool(mask.any()):
        return x0_hat.sum() * 0.0
    loss = ((x0_hat - batch.future)[mask] ** 2).mean()

    if ped_velocity_weight > 0 and controls is not None:
        ped = mask & (batch.classes == 1)
        if bool(ped.any()):
            prev = torch.cat([batch.anchor.unsqueeze(1), batch.future[:, :-1]], dim=1)
            vel = (batch.future - prev) / dt
            loss = loss + ped_velocity_weight * ((controls - vel)[ped] ** 2).mean()
    return loss


@dataclass
class Checkpoint:
    model_config: ModelConfig
    schedule: DiffusionSchedule
    stats: FeatureStats
    state_dict: dict
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_model(cls, model: DiffusionPredictor, schedule: DiffusionSchedule, meta: Optional[dict] = None):
        state = {k: v.detach().clone() for k, v in model.state_dict().items()}
        return cls(model.config, schedule, model.stats, state, dict(meta or {}))

    def build_model(self, dtype: torch.dtype = torch.float32) -> DiffusionPredictor:
        model = DiffusionPredictor(self.model_config, self.stats)
        model.load_state_dict(self.state_dict)
        return model.to(dtype).eval()

    def to_dict(self) -> dict:
        return {
            "format": CHECKPOINT_FORMAT,
            "version": list(CHECKPOINT_VERSION),
            "model_config": self.model_config.to_dict(),
            "schedule": self.schedule.to_dict(),
            "stats": self.stats.to_dict(),
            "state_dict": self.state_dict,
            "meta": self.meta,
        }

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        torch.save(self.to_dict(), path)
        return path

    @classmethod
    def load(cls, path) -> "Checkpoint":
        data = torch.load(Path(path), map_location="cpu", weights_only=False)
        if not isinstance(data, dict) or data.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"{path} is not a trajdiff checkpoint")
        major = int(data["version"][0])
        if major != CHECKPOINT_VERSION[0]:
            raise ValueError(f"checkpoint major version {major} is not supported (expected {CHECKPOINT_VERSION[0]})")
        cfg_fields = ModelConfig.__dataclass_fields__
        model_cfg = ModelConfig(**{k: v for k, v in data["model_config"].items() if k in cfg_fields})
        return cls(model_cfg, DiffusionSchedule.from_dict(data["schedule"]),
                   FeatureStats.from_dict(data["stats"]), data["state_dict"], data.get("meta", {}))


def train(dataset: Sequence, model_config: ModelConfig, train_config: TrainConfig, seed: int = 0,
          schedule: DiffusionSchedule = DiffusionSchedule(), val_dataset: Optional[Sequence] = None,
          stats: Optional[FeatureStats] = None, callback: Optional[Callable] = None) -> Checkpoint:
    """Fit a denoiser; returns the best checkpoint by validation ADE (or the last one)."""
    if len(dataset) == 0:
        raise ValueError("training dataset is empty")
    torch.set_num_threads(max(1, train_config.threads))
    torch.manual_seed(seed)
    stats = stats or FeatureStats.fit(dataset)
    model = DiffusionPredictor(model_config, stats)
    opt = torch.optim.AdamW(model.parameters(), lr=train_config.lr, weight_decay=train_config.weight_decay)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=max(1, train_config.steps))
    arrays = [prepare(s, stats) for s in dataset]
    order_rng = np.random.default_rng(seed)
    noise_rng = torch.Generator().manual_seed(seed + 1)
    gamma = schedule.gamma_fn

    losses, val_curve = [], []
    best, best_ade = None, math.inf
    order, cursor = order_rng.permutation(len(arrays)), 0
    start = time.perf_counter()
    model.train()
    for step in range(train_config.steps):
        idx = []
        while len(idx) < min(train_config.batch_size, len(arrays)):
            if cursor == len(order):
                order, cursor = order_rng.permutation(len(arrays)), 0
            idx.append(order[cursor])
            cursor += 1
        batch = collate([arrays[i] for i in idx] * train_config.repeats)
        loss = training_loss(batch, model, noise_rng, train_config.p_drop, gamma,
                             ped_velocity_weight=train_config.ped_velocity_weight, dt=model_config.dt)
        value = float(loss.detach())
        if not math.isfinite(value):
            raise TrainingDivergence(step, losses[-1] if losses else float("nan"))
        opt.zero_grad()
        loss.backward()
        if train_config.grad_clip:
            torch.nn.utils.clip_grad_norm_(model.parameters(), train_config.grad_clip)
        opt.step()
        sched.step()
        losses.append(value)
        if callback is not None:
            callback(step, value)
        if step % 100 == 0:
            logger.info("step %d loss %.5f lr %.2e (%.1fs)", step, value, sched.get_last_lr()[0],
                        time.perf_counter() - start)
        if val_dataset and train_config.eval_every and (step + 1) % train_config.eval_every == 0:
            ade = _validate(model, val_dataset, schedule, train_config.eval_samples, seed)
            val_curve.append((step + 1, ade))
            logger.info("step %d validation ADE %.4f", step + 1, ade)
            if ade < best_ade:
                best_ade = ade
                best = Checkpoint.from_model(model, schedule)
            model.train()

    meta = {"seed": seed, "steps": train_config.steps, "train_config": train_config.to_dict(),
            "loss_curve": losses, "val_curve": val_curve, "seconds": time.perf_counter() - start}
    model.eval()
    if best is None:
        return Checkpoint.from_model(model, schedule, meta)
    best.meta = {**meta, "best_val_ade": best_ade}
    return best


def _validate(model, dataset, schedule, n_samples, seed) -> float:
    from .evaluation import evaluate
    model.eval()
    with torch.no_grad():
        return evaluate(model, dataset, schedule, w=1.0, n_samples=n_samples, seed=seed).ade
