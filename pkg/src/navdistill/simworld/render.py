"""Egocentric pseudo-perspective raster.

Horizontal pixel position is linear in bearing; apparent height and width fall
off as 1/distance so depth has to be read from size. The goal is never drawn.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from navdistill.simworld.types import Behavior, WorldState, to_body_frame

CAMERA_HEIGHT = 0.8
PERSON_HEIGHT = 1.7
WALL_HEIGHT = 2.0

SKY_TOP = np.array([0.55, 0.70, 0.90])
SKY_HORIZON = np.array([0.80, 0.85, 0.95])
GROUND_HORIZON = np.array([0.45, 0.42, 0.38])
GROUND_NEAR = np.array([0.30, 0.28, 0.25])

BEHAVIOR_COLORS = {
    Behavior.CROSSING: (0.90, 0.20, 0.20),
    Behavior.APPROACHING: (0.95, 0.60, 0.10),
    Behavior.LEADING: (0.20, 0.80, 0.30),
    Behavior.STANDING: (0.20, 0.30, 0.90),
    Behavior.TURNING: (0.80, 0.20, 0.80),
}


def quantize(img: np.ndarray) -> np.ndarray:
    return (np.round(np.clip(img, 0.0, 1.0) * 255.0) / 255.0).astype(np.float32)


@lru_cache(maxsize=8)
def _background(h: int, w: int, c: int) -> np.ndarray:
    img = np.empty((h, w, 3))
    half = h // 2
    for r in range(h):
        if r < half:
            t = r / max(half - 1, 1)
            color = SKY_TOP + t * (SKY_HORIZON - SKY_TOP)
        else:
            t = (r - half) / max(h - half - 1, 1)
            color = GROUND_HORIZON + t * (GROUND_NEAR - GROUND_HORIZON)
        img[r, :, :] = color
    if c == 1:
        img = img.mean(axis=2, keepdims=True)
    elif c != 3:
        img = np.repeat(img.mean(axis=2, keepdims=True), c, axis=2)
    out = quantize(img)
    out.flags.writeable = False
    return out


def background(cfg) -> np.ndarray:
    return _background(cfg.image_height, cfg.image_width, cfg.channels).copy()


def column_bearings(width: int, fov: float) -> np.ndarray:
    u = np.arange(width) + 0.5
    return (width / 2.0 - u) / (width / 2.0) * (fov / 2.0)


def bearing_to_column(bearing: float, width: int, fov: float) -> float:
    return width / 2.0 - bearing / (fov / 2.0) * (width / 2.0)


def _wall_depths(w: WorldState, width: int, fov: float, max_range: float) -> np.ndarray:
    depth = np.full(width, np.inf)
    if not w.obstacles:
        return depth
    x, y, h = w.robot_pose
    ang = h + column_bearings(width, fov)
    dx, dy = np.cos(ang), np.sin(ang)
    for (ax, ay), (bx, by) in w.obstacles:
        ex, ey = bx - ax, by - ay
        denom = dx * (-ey) - dy * (-ex)
        with np.errstate(divide="ignore", invalid="ignore"):
            # robot + t*d = a + s*e
            rx, ry = ax - x, ay - y
            t = (rx * (-ey) - ry * (-ex)) / denom
            s = (dx * ry - dy * rx) / denom
        hit = (np.abs(denom) > 1e-12) & (t > 0) & (s >= 0) & (s <= 1) & (t <= max_range)
        depth = np.where(hit & (t < depth), t, depth)
    return depth


def _span(center: float, extent: float, limit: int) -> tuple[int, int]:
    lo = int(round(center - extent / 2.0))
    hi = int(round(center + extent / 2.0))
    if hi <= lo:
        hi = lo + 1
    return max(lo, 0), min(hi, limit)


def render_observation(w: WorldState, cfg) -> np.ndarray:
    """Render the (H, W, C) egocentric view of ``w``; values are multiples of 1/255."""
    hgt, wid, ch = cfg.image_height, cfg.image_width, cfg.channels
    fov = math.radians(cfg.fov_deg)
    img = background(cfg)
    focal_v = hgt / 2.0
    focal_h = (wid / 2.0) / math.tan(fov / 2.0)
    horizon = hgt / 2.0

    depth = _wall_depths(w, wid, fov, cfg.max_range)
    for col in np.nonzero(np.isfinite(depth))[0]:
        d = max(depth[col], 0.05)
        top = int(round(horizon - focal_v * (WALL_HEIGHT - CAMERA_HEIGHT) / d))
        bot = int(round(horizon + focal_v * CAMERA_HEIGHT / d))
        shade = min(0.12 + 0.025 * d, 0.35)
        img[max(top, 0) : min(bot, hgt), col, :] = shade

    if w.pedestrians:
        pos = np.array([p.position for p in w.pedestrians])
        body = to_body_frame(w.robot_pose, pos)
        dist = np.hypot(body[:, 0], body[:, 1])
        bearing = np.arctan2(body[:, 1], body[:, 0])
        visible = (np.abs(bearing) <= fov / 2.0) & (dist <= cfg.max_range) & (dist > 1e-6)
        for i in sorted(np.nonzero(visible)[0], key=lambda k: (-dist[k], k)):
            p = w.pedestrians[i]
            d = dist[i]
            u = bearing_to_column(bearing[i], wid, fov)
            c0, c1 = _span(u, 2.0 * p.radius * focal_h / d, wid)
            r0 = max(int(round(horizon - focal_v * (PERSON_HEIGHT - CAMERA_HEIGHT) / d)), 0)
            r1 = min(int(round(horizon + focal_v * CAMERA_HEIGHT / d)), hgt)
            if c1 <= c0 or r1 <= r0:
                continue
            cols = np.arange(c0, c1)
            cols = cols[d < depth[cols]]
            if cols.size == 0:
                continue
            color = np.asarray(BEHAVIOR_COLORS[p.behavior])
            # dim with distance so equal-size silhouettes at different ranges differ in tone
            color = color * (1.0 - 0.04 * min(d, cfg.max_range))
            if ch == 1:
                color = color.mean(keepdims=True)
            elif ch != 3:
                color = np.repeat(color.mean(), ch)
            img[r0:r1, cols[0] : cols[-1] + 1, :] = np.where(
                np.isin(np.arange(cols[0], cols[-1] + 1), cols)[None, :, None],
                color,
                img[r0:r1, cols[0] : cols[-1] + 1, :],
            )
    return quantize(img)
