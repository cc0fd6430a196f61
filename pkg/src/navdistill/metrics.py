"""Trajectory error metrics. Inputs are (..., H, 2) body-frame waypoints; leading axes are kept."""

from __future__ import annotations

import numpy as np

from navdistill.errors import ContractError

SKIP_NORM = 1e-6


def _pair(pred, gt) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred, dtype=np.float64)
    g = np.asarray(gt, dtype=np.float64)
    if p.shape != g.shape or p.ndim < 2 or p.shape[-1] != 2 or p.shape[-2] == 0:
        raise ContractError(f"trajectory shapes differ or are not (..., H, 2): {p.shape} vs {g.shape}")
    if not (np.isfinite(p).all() and np.isfinite(g).all()):
        raise ContractError("trajectories must be finite")
    return p, g


def _out(x: np.ndarray):
    return float(x) if x.ndim == 0 else x


def ade(pred, gt):
    """Average displacement error."""
    p, g = _pair(pred, gt)
    return _out(np.linalg.norm(p - g, axis=-1).mean(axis=-1))


def fde(pred, gt):
    """Displacement at the last waypoint."""
    p, g = _pair(pred, gt)
    return _out(np.linalg.norm(p[..., -1, :] - g[..., -1, :], axis=-1))


def aoe(pred, gt):
    """Mean absolute heading difference between origin-to-waypoint rays.

    Waypoints where either ray is shorter than 1e-6 m are ignored; a trajectory
    with nothing left scores 0.
    """
    p, g = _pair(pred, gt)
    keep = (np.linalg.norm(p, axis=-1) >= SKIP_NORM) & (np.linalg.norm(g, axis=-1) >= SKIP_NORM)
    diff = np.arctan2(p[..., 1], p[..., 0]) - np.arctan2(g[..., 1], g[..., 0])
    err = np.abs(diff)
    err = np.where(err > np.pi, 2.0 * np.pi - err, err)
    count = keep.sum(axis=-1)
    total = np.where(keep, err, 0.0).sum(axis=-1)
    return _out(np.where(count > 0, total / np.maximum(count, 1), 0.0))


def mse(pred, gt):
    p, g = _pair(pred, gt)
    return _out(((p - g) ** 2).mean(axis=(-2, -1)))
