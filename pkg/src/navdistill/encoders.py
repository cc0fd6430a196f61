"""Per-modality encoders and the state-fusion projector.

Modules work on batches; the lowercase functions at the bottom are
single-sample conveniences that validate shapes and raise ``ContractError``.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from navdistill.errors import ContractError
from navdistill.simworld.types import Narration
from navdistill.simworld.vocab import encode_tokens

PAD = -1


class _Mask:
    """Sentinel for a withheld goal."""

    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __repr__(self):
        return "MASK"


MASK = _Mask()


def is_mask(goal) -> bool:
    return goal is None or goal is MASK


class VisionEncoder(nn.Module):
    """Four stride-2 conv blocks, global average pool, linear to ``d_model``.

    Two extra input planes hold the pixel's normalized column and row scaled by
    its luminance, so pooled features keep where things sit in the view. Each
    block is a bias-free zero-padded conv, a parameter-free per-sample group
    norm and GELU; a black frame stays exactly zero through every block.
    """

    def __init__(self, d_model: int, channels: Sequence[int] = (32, 64, 128, 128), in_channels: int = 3,
                 image_size: tuple[int, int] = (64, 64)):
        super().__init__()
        self.image_size = tuple(image_size)
        self.in_channels = in_channels
        rows, cols = torch.meshgrid(torch.linspace(-1, 1, image_size[0]), torch.linspace(-1, 1, image_size[1]),
                                    indexing="ij")
        self.register_buffer("coords", torch.stack([cols, rows]), persistent=False)
        convs, c_in = [], in_channels + 2
        for c_out in channels:
            convs.append(nn.Conv2d(c_in, c_out, 3, stride=2, padding=1, bias=False))
            c_in = c_out
        self.convs = nn.ModuleList(convs)
        self.norms = nn.ModuleList(nn.GroupNorm(1, c, affine=False) for c in channels)
        self.proj = nn.Linear(c_in, d_model)

    def check(self, images: torch.Tensor) -> None:
        want = (*self.image_size, self.in_channels)
        if tuple(images.shape[-3:]) != want:
            raise ContractError(f"image shape {tuple(images.shape[-3:])} does not match encoder input {want}")

    def features(self, images: torch.Tensor) -> torch.Tensor:
        """(..., H, W, C) in [0, 1] to the (..., C', H', W') pre-pooling map."""
        self.check(images)
        lead = images.shape[:-3]
        x = images.reshape(-1, *images.shape[-3:]).permute(0, 3, 1, 2)
        lum = x.mean(dim=1, keepdim=True)
        x = torch.cat([x, lum * self.coords.to(x.dtype)], dim=1)
        for conv, norm in zip(self.convs, self.norms):
            x = F.gelu(norm(conv(x)))
        return x.reshape(*lead, *x.shape[1:])

    def forward(self, images: torch.Tensor, return_features: bool = False):
        fmap = self.features(images)
        out = self.proj(fmap.mean(dim=(-2, -1)))
        return (out, fmap) if return_features else out


class WaypointEncoder(nn.Module):
    """Affine map of a body-frame (x, y) into the model width."""

    def __init__(self, d_model: int):
        super().__init__()
        self.affine = nn.Linear(2, d_model)

    def forward(self, waypoints: torch.Tensor) -> torch.Tensor:
        return self.affine(waypoints)


class TextEncoder(nn.Module):
    """Mean of token embeddings followed by a linear projection.

    ``ids`` is (B, T) with ``PAD`` filling; rows with no tokens map to a
    learned null-text vector.
    """

    def __init__(self, d_model: int, vocab_size: int):
        super().__init__()
        self.vocab_size = vocab_size
        self.table = nn.Embedding(vocab_size, d_model)
        self.proj = nn.Linear(d_model, d_model)
        self.null = nn.Parameter(torch.randn(d_model) * 0.02)

    def forward(self, ids: torch.Tensor) -> torch.Tensor:
        if ids.ndim != 2:
            raise ContractError("token ids must be (batch, length)")
        if ids.numel() and int(ids.max()) >= self.vocab_size:
            raise ContractError("token id outside the vocabulary")
        mask = ids != PAD
        emb = self.table(ids.clamp(min=0)) * mask.unsqueeze(-1).to(self.table.weight.dtype)
        count = mask.sum(dim=1, keepdim=True)
        pooled = emb.sum(dim=1) / count.clamp(min=1).to(emb.dtype)
        out = self.proj(pooled)
        return torch.where(count > 0, out, self.null.expand_as(out))


class GoalEncoder(nn.Module):
    """Affine goal embedding plus a learned type vector; masked goals get only the masked type."""

    def __init__(self, d_model: int):
        super().__init__()
        self.affine = nn.Linear(2, d_model)
        self.provided = nn.Parameter(torch.randn(d_model) * 0.02)
        self.masked = nn.Parameter(torch.randn(d_model) * 0.02)

    def forward(self, goals: torch.Tensor, masked: torch.Tensor) -> torch.Tensor:
        provided = self.affine(goals) + self.provided
        return torch.where(masked.unsqueeze(-1), self.masked.expand_as(provided), provided)


class StateFusion(nn.Module):
    """Concatenate action and image embeddings, then linear, GELU and a parameter-free layer norm."""

    def __init__(self, d_model: int, eps: float = 1e-9):
        super().__init__()
        self.d_model = d_model
        self.eps = eps
        self.linear = nn.Linear(2 * d_model, d_model)

    def forward(self, a_emb: torch.Tensor, i_emb: torch.Tensor) -> torch.Tensor:
        if a_emb.shape[-1] != self.d_model or i_emb.shape[-1] != self.d_model:
            raise ContractError(f"fusion inputs must have width {self.d_model}")
        a_emb, i_emb = torch.broadcast_tensors(a_emb, i_emb)
        h = F.gelu(self.linear(torch.cat([a_emb, i_emb], dim=-1)))
        return F.layer_norm(h, (self.d_model,), eps=self.eps)


def narration_ids(narrations: Sequence[Narration], length: Optional[int] = None) -> torch.Tensor:
    """Pad token ids of several narrations into a (B, T) long tensor."""
    rows = [encode_tokens(n.tokens) for n in narrations]
    width = max([len(r) for r in rows] + [length or 0, 1])
    out = np.full((len(rows), width), PAD, dtype=np.int64)
    for i, r in enumerate(rows):
        out[i, : len(r)] = r
    return torch.from_numpy(out)


# -- single-sample functional forms ------------------------------------------


def _vec(x, dtype) -> torch.Tensor:
    return x.to(dtype) if isinstance(x, torch.Tensor) else torch.as_tensor(np.asarray(x), dtype=dtype)


def encode_image(img, enc: VisionEncoder, return_features: bool = False):
    """Embed one (H, W, C) image. With ``return_features`` also return the (C', H', W') map."""
    x = _vec(img, enc.proj.weight.dtype)
    if x.ndim != 3:
        raise ContractError(f"expected a single (H, W, C) image, got shape {tuple(x.shape)}")
    out, fmap = enc(x.unsqueeze(0), return_features=True)
    return (out[0], fmap[0]) if return_features else out[0]


def embed_waypoint(a, enc: WaypointEncoder) -> torch.Tensor:
    x = _vec(a, enc.affine.weight.dtype)
    if x.shape != (2,):
        raise ContractError("a waypoint is two numbers")
    return enc(x)


def encode_text(narration: Narration | Sequence[str], enc: TextEncoder) -> torch.Tensor:
    if not isinstance(narration, Narration):
        narration = Narration(tuple(narration))
    return enc(narration_ids([narration]))[0]


def encode_goal(goal, enc: GoalEncoder) -> torch.Tensor:
    dtype = enc.affine.weight.dtype
    if is_mask(goal):
        return enc(torch.zeros(1, 2, dtype=dtype), torch.ones(1, dtype=torch.bool))[0]
    g = _vec(goal, dtype)
    if g.shape != (2,) or not torch.isfinite(g).all():
        raise ContractError("a provided goal is two finite numbers")
    return enc(g.unsqueeze(0), torch.zeros(1, dtype=torch.bool))[0]


def fuse_state(a_emb, i_emb, fusion: StateFusion) -> torch.Tensor:
    a, i = _vec(a_emb, fusion.linear.weight.dtype), _vec(i_emb, fusion.linear.weight.dtype)
    if a.shape != (fusion.d_model,) or i.shape != (fusion.d_model,):
        raise ContractError(f"fusion inputs must both be length {fusion.d_model}")
    return fusion(a, i)
