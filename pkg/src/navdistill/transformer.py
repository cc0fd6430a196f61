"""Pre-norm bidirectional transformer shared by teacher and student."""

from __future__ import annotations

import torch
from torch import nn
from torch.nn import functional as F


class Block(nn.Module):
    def __init__(self, d_model: int, heads: int, mlp_ratio: int = 4):
        super().__init__()
        self.norm1 = nn.LayerNorm(d_model)
        self.attn = nn.MultiheadAttention(d_model, heads, batch_first=True)
        self.norm2 = nn.LayerNorm(d_model)
        self.fc1 = nn.Linear(d_model, mlp_ratio * d_model)
        self.fc2 = nn.Linear(mlp_ratio * d_model, d_model)

    def forward(self, x: torch.Tensor, need_weights: bool = False):
        h = self.norm1(x)
        a, w = self.attn(h, h, h, need_weights=need_weights, average_attn_weights=True)
        x = x + a
        x = x + self.fc2(F.gelu(self.fc1(self.norm2(x))))
        return x, w


class Transformer(nn.Module):
    def __init__(self, d_model: int, layers: int, heads: int, mlp_ratio: int = 4):
        super().__init__()
        self.blocks = nn.ModuleList(Block(d_model, heads, mlp_ratio) for _ in range(layers))
        self.norm = nn.LayerNorm(d_model)

    def forward(self, x: torch.Tensor, return_attention: bool = False):
        """(B, L, D) to (B, L, D); optionally also the per-layer (B, L, L) head-averaged attention."""
        maps = []
        for blk in self.blocks:
            x, w = blk(x, need_weights=return_attention)
            if return_attention:
                maps.append(w)
        x = self.norm(x)
        return (x, maps) if return_attention else x


def mlp(d_in: int, hidden: int, d_out: int) -> nn.Sequential:
    return nn.Sequential(nn.Linear(d_in, hidden), nn.GELU(), nn.Linear(hidden, d_out))
