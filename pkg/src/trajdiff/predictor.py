"""The denoiser: history/lane encoders, time embedding, attention fusion,
Graph-GRU decoder and motion-model integration."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import NamedTuple, Optional

import torch
from torch import nn

from .batching import Batch, FeatureStats
from .graph_nets import GATv2Layer, GraphGRUCell
from .motion import PedestrianField, VehicleModelConfig, friction_clamp, rollout_pedestrian, rollout_vehicle
from .scene.graphs import LANE_FEATURES, FeatureProfile
from .scene.types import HORIZON_STEPS, SAMPLE_DT


@dataclass
class ModelConfig:
    profile: str = "highway"
    hidden: int = 32
    encoder_heads: int = 1
    decoder_heads: int = 1
    attn_heads: int = 4
    lane_hidden: int = 32
    lane_layers: int = 3
    lane_heads: int = 4
    ped_hidden: int = 32
    ped_depth: int = 2
    fourier_features: int = 16
    fourier_scale: float = 4.0
    fourier_seed: int = 0
    use_motion_model: bool = True
    zero_init_output: bool = True
    horizon: int = HORIZON_STEPS
    dt: float = SAMPLE_DT
    mu: float = 0.7
    g: float = 9.81
    polar_features: bool = False

    def __post_init__(self):
        if min(self.hidden, self.lane_hidden, self.ped_hidden) <= 0:
            raise ValueError("widths must be positive")
        FeatureProfile(self.profile)

    @property
    def feature_profile(self) -> FeatureProfile:
        return FeatureProfile(self.profile, (0.0, 0.0) if self.polar_features else None)

    @property
    def uses_lane_encoder(self) -> bool:
        return self.feature_profile.uses_lane_graph

    @classmethod
    def highway(cls, **kw) -> "ModelConfig":
        """Full-scale highway settings (512 wide, 4 attention heads, no lane encoder)."""
        return cls(**{"profile": "highway", "hidden": 512, "attn_heads": 4, **kw})

    @classmethod
    def roundabout(cls, **kw) -> "ModelConfig":
        """Full-scale roundabout settings (128 wide, 3-layer 4-head lane encoder)."""
        return cls(**{"profile": "roundabout", "hidden": 128, "lane_hidden": 128, "lane_layers": 3,
                      "lane_heads": 4, "attn_heads": 4, "ped_hidden": 32, "ped_depth": 2, **kw})

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


class TimeEmbedding(nn.Module):
    """Frozen random Fourier features of t followed by a 2-layer MLP."""

    def __init__(self, dim: int, n_freq: int = 16, scale: float = 4.0, seed: int = 0):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        self.register_buffer("freqs", torch.randn(n_freq, generator=gen) * scale)
        self.mlp = nn.Sequential(nn.Linear(2 * n_freq, dim), nn.SiLU(), nn.Linear(dim, dim))

    def fourier(self, t: torch.Tensor) -> torch.Tensor:
        arg = 2 * math.pi * t.unsqueeze(-1) * self.freqs.to(t.dtype)
        return torch.cat([torch.sin(arg), torch.cos(arg)], dim=-1)

    def forward(self, t: torch.Tensor) -> torch.Tensor:
        return self.mlp(self.fourier(t))


class LaneEncoder(nn.Module):
    def __init__(self, node_features: int, dim: int, layers: int, heads: int):
        super().__init__()
        self.env_in = nn.Linear(LANE_FEATURES, dim)
        self.agent_in = nn.Linear(node_features, dim)
        self.layers = nn.ModuleList(GATv2Layer(dim, dim, 1, heads) for _ in range(layers))
        self.act = nn.SiLU()

    def forward(self, batch: Batch) -> tuple:
        """Return (agent embeddings (A, d), env embeddings (M, d))."""
        env = self.env_in(batch.lane_env)
        agents = self.agent_in(batch.hist_feat[-1])
        x = torch.cat([env, agents])
        for i, layer in enumerate(self.layers):
            x = layer(x, batch.lane_edge_index, batch.lane_edge_attr)
            if i < len(self.layers) - 1:
                x = self.act(x)
        n_env = env.shape[0]
        return x[n_env:], x[:n_env]


class Encoding(NamedTuple):
    hist_states: torch.Tensor   # (A, h, d)
    hist_mask: torch.Tensor     # (A, h) True where observed
    final: torch.Tensor         # (A, d)
    lane_tokens: Optional[torch.Tensor]
    lane_mask: Optional[torch.Tensor]


class DenoiseOutput(NamedTuple):
    positions: torch.Tensor     # (A, N, 2)
    controls: torch.Tensor      # (A, N, 2)


class DiffusionPredictor(nn.Module):
    """M_theta(x_t, t, c) -> x0_hat for every agent of a :class:`Batch`."""

    def __init__(self, config: ModelConfig, stats: FeatureStats):
        super().__init__()
        self.config = config
        self.stats = stats
        d = config.hidden
        n_feat = config.feature_profile.num_features
        self.encoder = GraphGRUCell(n_feat, d, 1, config.encoder_heads)
        self.lane_encoder = LaneEncoder(n_feat, config.lane_hidden, config.lane_layers, config.lane_heads) \
            if config.uses_lane_encoder else None
        self.lane_proj = nn.Linear(config.lane_hidden, d) if config.uses_lane_encoder else None
        self.latent_in = nn.Linear(2, d)
        self.step_embedding = nn.Parameter(torch.randn(config.horizon, d) * 0.02)
        self.time_embedding = TimeEmbedding(d, config.fourier_features, config.fourier_scale, config.fourier_seed)
        self.attn_hist = nn.MultiheadAttention(d, config.attn_heads, batch_first=True)
        self.attn_lane = nn.MultiheadAttention(d, config.attn_heads, batch_first=True) \
            if config.uses_lane_encoder else None
        n_ctx = 3 if config.uses_lane_encoder else 2
        self.fuse = nn.Sequential(nn.Linear(n_ctx * d, d), nn.SiLU(), nn.Linear(d, d))
        self.decoder = GraphGRUCell(d, d, 1, config.decoder_heads)
        self.head = nn.Linear(d, 2)
        self.ped_field = PedestrianField(config.ped_hidden, config.ped_depth)
        self.vehicle_cfg = VehicleModelConfig(config.mu, config.g)
        self.register_buffer("offset_scale", torch.as_tensor(stats.offset_scale, dtype=torch.float32))
        if config.zero_init_output:
            nn.init.zeros_(self.head.weight)
            nn.init.zeros_(self.head.bias)

    # -- condition encoding (independent of x_t and t) ------------------
    def encode(self, batch: Batch) -> Encoding:
        h = batch.hist_feat.new_zeros((batch.num_agents, self.config.hidden))
        states = []
        for i, (ei, ea) in enumerate(batch.hist_edges):
            h = self.encoder(batch.hist_feat[i], h, ei, ea, mask=batch.hist_present[i])
            states.append(h)
        hist_states = torch.stack(states, dim=1)
        hist_mask = batch.hist_present.transpose(0, 1)
        lane_tokens = lane_mask = None
        if self.lane_encoder is not None:
            agent_emb, env_emb = self.lane_encoder(batch)
            nbr = batch.lane_nbr
            env_tok = env_emb[nbr.clamp(min=0)] if env_emb.shape[0] else agent_emb.new_zeros((*nbr.shape, agent_emb.shape[1]))
            lane_tokens = self.lane_proj(torch.cat([agent_emb.unsqueeze(1), env_tok], dim=1))
            lane_mask = torch.cat([torch.ones_like(nbr[:, :1], dtype=torch.bool), nbr >= 0], dim=1)
        return Encoding(hist_states, hist_mask, h, lane_tokens, lane_mask)

    # -- per-step denoising ---------------------------------------------
    def _time(self, t, batch: Batch) -> torch.Tensor:
        t = torch.as_tensor(t, dtype=batch.dtype)
        if t.dim() == 0:
            t = t.expand(batch.num_agents)
        return t

    def decode(self, x_t: torch.Tensor, t, batch: Batch, enc: Encoding) -> DenoiseOutput:
        scale = self.offset_scale.to(x_t.dtype)
        rel = (x_t - batch.anchor.unsqueeze(1)) / scale
        q = self.latent_in(rel) + self.step_embedding.unsqueeze(0) + self.time_embedding(self._time(t, batch)).unsqueeze(1)
        parts = [q, self.attn_hist(q, enc.hist_states, enc.hist_states,
                                   key_padding_mask=~enc.hist_mask, need_weights=False)[0]]
        if self.attn_lane is not None:
            parts.append(self.attn_lane(q, enc.lane_tokens, enc.lane_tokens,
                                        key_padding_mask=~enc.lane_mask, need_weights=False)[0])
        ctx = self.fuse(torch.cat(parts, dim=-1))

        ei, ea = batch.hist_edges[-1]
        h = enc.final
        outs = []
        for k in range(ctx.shape[1]):
            h = self.decoder(ctx[:, k], h, ei, ea)
            outs.append(h)
        raw = self.head(torch.stack(outs, dim=1))
        if not self.config.use_motion_model:
            return DenoiseOutput(batch.anchor.unsqueeze(1) + raw * scale, raw)
        return self.integrate(raw, batch)

    def integrate(self, raw: torch.Tensor, batch: Batch) -> DenoiseOutput:
        """Clamp vehicle inputs and roll both motion models out from the init states."""
        is_ped = (batch.classes == 1).view(-1, 1, 1)
        u_vehicle = friction_clamp(raw, self.vehicle_cfg)
        pos = rollout_vehicle(batch.anchor, batch.init_vel, u_vehicle, self.config.dt, self.vehicle_cfg, clamp=False)
        controls = u_vehicle
        if bool(is_ped.any()):
            ped = rollout_pedestrian(batch.anchor, raw, self.ped_field, self.config.dt)
            pos = torch.where(is_ped, ped, pos)
            controls = torch.where(is_ped, raw, u_vehicle)
        return DenoiseOutput(pos, controls)

    def denoise(self, x_t: torch.Tensor, t, batch: Batch, enc: Optional[Encoding] = None) -> DenoiseOutput:
        return self.decode(x_t, t, batch, enc if enc is not None else self.encode(batch))

    def forward(self, x_t: torch.Tensor, t, batch: Batch) -> torch.Tensor:
        return self.denoise(x_t, t, batch).positions


class CachedDenoiser:
    """Callable ``(x_t, t, c) -> x0_hat`` that encodes each condition once.

    Conditions are keyed by identity, so keep them alive while sampling.
    """

    def __init__(self, model: DiffusionPredictor):
        self.model = model
        self._cache = {}
        self.calls = 0

    def __call__(self, x_t, t, batch):
        key = id(batch)
        if key not in self._cache:
            self._cache[key] = (batch, self.model.encode(batch))
        self.calls += 1
        return self.model.decode(x_t, t, batch, self._cache[key][1]).positions
