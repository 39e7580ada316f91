"""GATv2 layer with an extra center-node weight, and the Graph-GRU cell.

Graphs are passed as ``edge_index`` (2, E) with row 0 = source, row 1 =
destination, and ``edge_attr`` (E, d_e). Every node that should be updated
needs a self-loop; nodes without incoming edges aggregate nothing.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

NEGATIVE_SLOPE = 0.2


def _as_edge_attr(edge_attr: torch.Tensor) -> torch.Tensor:
    return edge_attr.unsqueeze(-1) if edge_attr.dim() == 1 else edge_attr


def segment_softmax(scores: torch.Tensor, index: torch.Tensor, num_segments: int) -> torch.Tensor:
    """Softmax of ``scores`` (E, H) within groups sharing the same ``index``."""
    heads = scores.shape[1]
    idx = index.unsqueeze(-1).expand(-1, heads)
    peak = scores.new_full((num_segments, heads), float("-inf"))
    peak = peak.scatter_reduce(0, idx, scores.detach(), reduce="amax", include_self=True)
    ex = torch.exp(scores - peak[index])
    denom = scores.new_zeros((num_segments, heads)).index_add_(0, index, ex)
    return ex / denom[index]


class GATv2Layer(nn.Module):
    """Attention-weighted aggregation over the inclusive neighborhood.

    scores  e_vt = a . LeakyReLU(W1 h_v + W2 h_t + W3 e_vt)
    update  h'_v = b + (alpha_vv W1 + W4) h_v + sum_{t != v} alpha_vt W2 h_t

    With ``heads > 1`` every head works on ``out_dim // heads`` channels and
    the head outputs are concatenated; W4 and b act on the full width.
    """

    def __init__(self, in_dim: int, out_dim: int, edge_dim: int = 1, heads: int = 1,
                 negative_slope: float = NEGATIVE_SLOPE, center_weight: bool = True):
        super().__init__()
        if out_dim % heads:
            raise ValueError(f"out_dim {out_dim} not divisible by heads {heads}")
        self.heads = heads
        self.head_dim = out_dim // heads
        self.out_dim = out_dim
        self.negative_slope = negative_slope
        self.w1 = nn.Linear(in_dim, out_dim, bias=False)
        self.w2 = nn.Linear(in_dim, out_dim, bias=False)
        self.w3 = nn.Linear(edge_dim, out_dim, bias=False)
        self.w4 = nn.Linear(in_dim, out_dim, bias=False) if center_weight else None
        self.att = nn.Parameter(torch.empty(heads, self.head_dim))
        self.bias = nn.Parameter(torch.zeros(out_dim))
        self.reset_parameters()

    def reset_parameters(self):
        for lin in (self.w1, self.w2, self.w3, self.w4):
            if lin is not None:
                nn.init.xavier_uniform_(lin.weight)
        nn.init.xavier_uniform_(self.att)
        nn.init.zeros_(self.bias)

    def _project(self, x, edge_attr):
        shape = (-1, self.heads, self.head_dim)
        return self.w1(x).view(shape), self.w2(x).view(shape), self.w3(edge_attr).view(shape)

    def _scores(self, center, neigh, edge, src, dst):
        act = F.leaky_relu(center[dst] + neigh[src] + edge, self.negative_slope)
        return (act * self.att).sum(-1)

    def attention(self, x: torch.Tensor, edge_index: torch.Tensor, edge_attr: torch.Tensor) -> torch.Tensor:
        """Attention weights per edge, shape (E, heads)."""
        center, neigh, edge = self._project(x, _as_edge_attr(edge_attr))
        src, dst = edge_index
        return segment_softmax(self._scores(center, neigh, edge, src, dst), dst, x.shape[0])

    def forward(self, x: torch.Tensor, edge_index: torch.Tensor, edge_attr: torch.Tensor) -> torch.Tensor:
        center, neigh, edge = self._project(x, _as_edge_attr(edge_attr))
        src, dst = edge_index
        alpha = segment_softmax(self._scores(center, neigh, edge, src, dst), dst, x.shape[0])
        is_self = (src == dst).view(-1, 1, 1)
        msg = torch.where(is_self, center[src], neigh[src]) * alpha.unsqueeze(-1)
        out = x.new_zeros((x.shape[0], self.heads, self.head_dim)).index_add_(0, dst, msg)
        out = out.reshape(x.shape[0], self.out_dim) + self.bias
        if self.w4 is not None:
            out = out + self.w4(x)
        return out


class GraphGRUCell(nn.Module):
    """GRU cell whose input and hidden maps are GATv2 layers over the scene graph."""

    def __init__(self, in_dim: int, hidden_dim: int, edge_dim: int = 1, heads: int = 1):
        super().__init__()
        self.hidden_dim = hidden_dim
        self.gnn_x = GATv2Layer(in_dim, 3 * hidden_dim, edge_dim, heads)
        self.gnn_h = GATv2Layer(hidden_dim, 3 * hidden_dim, edge_dim, heads)
        self.b_r = nn.Parameter(torch.zeros(hidden_dim))
        self.b_z = nn.Parameter(torch.zeros(hidden_dim))
        self.b_n = nn.Parameter(torch.zeros(hidden_dim))

    def forward(self, x, h, edge_index, edge_attr, mask=None):
        """One recurrent step. Rows where ``mask`` is False keep ``h`` unchanged."""
        xr, xz, xn = self.gnn_x(x, edge_index, edge_attr).chunk(3, dim=-1)
        hr, hz, hn = self.gnn_h(h, edge_index, edge_attr).chunk(3, dim=-1)
        r = torch.sigmoid(xr + hr + self.b_r)
        z = torch.sigmoid(xz + hz + self.b_z)
        n = torch.tanh(xn + r * hn + self.b_n)
        out = (1 - z) * n + z * h
        if mask is not None:
            out = torch.where(mask.unsqueeze(-1), out, h)
        return out


def _star(center, neighbors: Sequence, dtype):
    """Star graph: node 0 is the center, every neighbor points at it, plus a self-loop."""
    x = torch.stack([torch.as_tensor(center, dtype=dtype)]
                    + [torch.as_tensor(h, dtype=dtype) for h, _ in neighbors])
    k = len(neighbors)
    src = torch.arange(k + 1)
    dst = torch.zeros(k + 1, dtype=torch.long)
    attr = torch.tensor([0.0] + [float(e) for _, e in neighbors], dtype=dtype).unsqueeze(-1)
    return x, torch.stack([src, dst]), attr


def gat_attention(center, neighbors: Sequence, params: GATv2Layer) -> torch.Tensor:
    """Weights over (self, neighbor_1, ..., neighbor_k) for a single center node."""
    x, edge_index, attr = _star(center, neighbors, params.att.dtype)
    alpha = params.attention(x, edge_index, attr)
    return alpha.squeeze(-1) if params.heads == 1 else alpha


def gat_update(center, neighbors: Sequence, params: GATv2Layer) -> torch.Tensor:
    """Updated embedding of a single center node given its neighbors."""
    x, edge_index, attr = _star(center, neighbors, params.att.dtype)
    return params(x, edge_index, attr)[0]


def graph_tensors(graph, dtype=None):
    """(edge_index, edge_attr) tensors from a :class:`SceneGraph`."""
    dtype = dtype or torch.get_default_dtype()
    edge_index = torch.as_tensor(np.asarray(graph.edge_index), dtype=torch.long)
    edge_attr = torch.as_tensor(np.asarray(graph.edge_attr), dtype=dtype).unsqueeze(-1)
    return edge_index, edge_attr


def ggru_step(x: torch.Tensor, h_prev: torch.Tensor, graph, params: GraphGRUCell) -> torch.Tensor:
    """Graph-GRU update of every node of ``graph``."""
    n = graph.num_nodes
    if x.shape[0] != n or h_prev.shape[0] != n:
        raise ValueError(f"node-set mismatch: graph has {n} nodes, x {x.shape[0]}, h_prev {h_prev.shape[0]}")
    edge_index, edge_attr = graph_tensors(graph, x.dtype)
    return params(x, h_prev, edge_index, edge_attr)
