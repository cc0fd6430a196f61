"""Representation and trajectory losses."""

from __future__ import annotations

import numpy as np
import torch

from navdistill.errors import ContractError, DegenerateBatchError

STD_FLOOR = 1e-12


def _as_tensor(x) -> torch.Tensor:
    return x if isinstance(x, torch.Tensor) else torch.as_tensor(np.asarray(x, dtype=np.float64))


def standardize(x: torch.Tensor) -> torch.Tensor:
    """Zero-mean, unit-variance columns using the population standard deviation."""
    centered = x - x.mean(dim=0, keepdim=True)
    std = centered.pow(2).mean(dim=0, keepdim=True).sqrt()
    bad = (std.detach() <= STD_FLOOR).flatten()
    if bool(bad.any()):
        dims = torch.nonzero(bad).flatten().tolist()
        raise DegenerateBatchError(f"zero-variance embedding dimensions {dims[:8]} in a batch of {x.shape[0]}")
    return centered / std


def cross_correlation(a, b) -> torch.Tensor:
    """K x K correlation between two embedding batches of shape (N, K).

    Each column is standardized over the batch before ``C = A^T B / N``.
    """
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 2 or a.shape != b.shape:
        raise ContractError(f"embedding batches must share an (N, K) shape, got {tuple(a.shape)} and {tuple(b.shape)}")
    if a.shape[0] < 2:
        raise DegenerateBatchError("cross-correlation needs at least two samples")
    za, zb = standardize(a), standardize(b)
    return za.T @ zb / a.shape[0]


def barlow_twins_loss(a, b, lambd: float = 5e-3) -> torch.Tensor:
    """Invariance term on the diagonal plus ``lambd`` times the squared off-diagonal."""
    if not lambd > 0:
        raise ContractError("lambda must be positive")
    c = cross_correlation(a, b)
    diag = torch.diagonal(c)
    on = (1.0 - diag).pow(2).sum()
    off = c.pow(2).sum() - diag.pow(2).sum()
    return on + lambd * off


def mse_traj(pred, gt) -> torch.Tensor:
    """Mean squared error over every waypoint coordinate."""
    pred, gt = _as_tensor(pred), _as_tensor(gt)
    if pred.shape != gt.shape or pred.shape[-1] != 2:
        raise ContractError(f"trajectory shapes differ: {tuple(pred.shape)} vs {tuple(gt.shape)}")
    return (pred - gt).pow(2).mean()
