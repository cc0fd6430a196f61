"""Scripted socially-compliant demonstrator.

A small sampling planner: each tick it scores a fixed grid of (v, omega)
commands by simulating them for a few seconds against forecasts of the
pedestrian scripts (the demonstrator is privileged), trading goal progress
against clearance. Crossers are yielded to because passing in front scores
worse than waiting. Standing pedestrians are detoured around, a lone oncoming one
is passed keeping right in open space, and a leader is never overtaken.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from navdistill.simworld.types import Behavior, WorldState, to_body_frame
from navdistill.simworld.world import OMEGA_MAX, advance_pedestrian, pedestrian_arrays

ARRIVAL_RADIUS = 0.25
PLAN_HORIZON = 3.0
PLAN_DT = 0.25
MAX_ACCEL_STEP = 0.4
FOLLOW_GAP = 1.6
PASS_WINDOW = 1.2
PASS_OFFSET = 1.2
KEEP_RIGHT_WEIGHT = 10.0
RAMP_START = 7.0
RAMP_END = 2.5
CORRIDOR = 1.2


@dataclass
class ExpertState:
    arrived: bool = False


def _segments_distance(points: np.ndarray, walls) -> np.ndarray:
    """Min distance from each of (..., 2) points to any wall segment."""
    best = np.full(points.shape[:-1], np.inf)
    for (ax, ay), (bx, by) in walls:
        a = np.array([ax, ay])
        e = np.array([bx - ax, by - ay])
        denom = float(e @ e)
        rel = points - a
        t = np.clip((rel @ e) / denom, 0.0, 1.0) if denom > 0 else np.zeros(points.shape[:-1])
        d = np.linalg.norm(rel - t[..., None] * e, axis=-1)
        best = np.minimum(best, d)
    return best


def _forecast(pedestrians, n_sub: int) -> np.ndarray:
    out = np.empty((n_sub, len(pedestrians), 2))
    peds = list(pedestrians)
    for k in range(n_sub):
        peds = [advance_pedestrian(p, PLAN_DT) for p in peds]
        out[k] = [p.position for p in peds]
    return out


def expert_command(
    w: WorldState,
    goal_world: np.ndarray,
    state: ExpertState,
    robot_radius: float = 0.3,
    max_speed: float = 1.0,
) -> tuple[float, float]:
    x, y, h = w.robot_pose
    to_goal = np.asarray(goal_world) - np.array([x, y])
    dist_goal = float(np.hypot(*to_goal))
    if state.arrived or dist_goal < ARRIVAL_RADIUS:
        state.arrived = True
        return 0.0, 0.0

    v_prev = w.robot_vel[0]
    vs = np.round(np.arange(0.0, max_speed + 1e-9, 0.1), 10)
    vs = vs[np.abs(vs - v_prev) <= MAX_ACCEL_STEP + 1e-9]
    oms = np.linspace(-OMEGA_MAX, OMEGA_MAX, 13)
    V, OM = np.meshgrid(vs, oms, indexing="ij")
    V, OM = V.ravel(), OM.ravel()

    n_sub = int(round(PLAN_HORIZON / PLAN_DT))
    xs = np.empty((V.size, n_sub))
    ys = np.empty((V.size, n_sub))
    hs = np.empty((V.size, n_sub))
    cx, cy, ch = np.full(V.size, x), np.full(V.size, y), np.full(V.size, h)
    for k in range(n_sub):
        cx = cx + V * np.cos(ch) * PLAN_DT
        cy = cy + V * np.sin(ch) * PLAN_DT
        ch = ch + OM * PLAN_DT
        xs[:, k], ys[:, k], hs[:, k] = cx, cy, ch
    times = PLAN_DT * np.arange(1, n_sub + 1)
    traj = np.stack([xs, ys], axis=-1)

    end_dist = np.hypot(goal_world[0] - xs[:, -1], goal_world[1] - ys[:, -1])
    # distance actually covered toward the goal along the first second matters most
    first = np.hypot(goal_world[0] - xs[:, 3], goal_world[1] - ys[:, 3])
    cost = 1.0 * end_dist + 0.8 * first
    heading_err = np.abs(np.angle(np.exp(1j * (np.arctan2(goal_world[1] - ys[:, -1], goal_world[0] - xs[:, -1]) - hs[:, -1]))))
    cost += 0.15 * heading_err * (end_dist > 0.5)
    cost += 0.08 * np.abs(OM - w.robot_vel[1]) + 0.1 * np.abs(V - v_prev)

    pos, _, rad = pedestrian_arrays(w)
    if len(rad):
        ped = _forecast(w.pedestrians, n_sub)  # (T, P, 2)
        d = np.linalg.norm(traj[:, :, None, :] - ped[None, :, :, :], axis=-1)  # (N, T, P)
        clear = d - (robot_radius + rad)[None, None, :]
        weight = np.exp(-times / 2.0)[None, :, None]
        cost += 2.5 * (np.exp(-np.clip(clear, 0, None) / 0.35) * weight).max(axis=1).sum(axis=1)
        cost += 200.0 * (clear.min(axis=(1, 2)) < 0.15)

        # keep right around a lone oncoming pedestrian in open space: it is passed on
        # the robot's left, and the sidestep starts as soon as it enters the corridor ahead
        c, s_ = math.cos(h), math.sin(h)
        for i, p in enumerate(w.pedestrians):
            if p.behavior is not Behavior.APPROACHING or w.obstacles or len(w.pedestrians) > 1:
                continue
            if abs(-s_ * (x - p.position[0]) + c * (y - p.position[1])) > CORRIDOR:
                continue
            rel_x, rel_y = traj[..., 0] - ped[None, :, i, 0], traj[..., 1] - ped[None, :, i, 1]
            along = c * rel_x + s_ * rel_y
            lateral = -s_ * rel_x + c * rel_y
            # required offset ramps up as the gap closes, so the sidestep is a gradual lane change
            need = PASS_OFFSET * np.clip((RAMP_START + along) / (RAMP_START - RAMP_END), 0, 1)
            ahead = along < PASS_WINDOW
            cost += KEEP_RIGHT_WEIGHT * (np.clip(lateral + need, 0, None) * ahead).mean(axis=1)

        body = to_body_frame(w.robot_pose, pos)
        for i, p in enumerate(w.pedestrians):
            bx, by = body[i]
            if p.behavior is Behavior.LEADING and bx > 0 and abs(math.atan2(by, bx)) < math.radians(35):
                gap = math.hypot(bx, by)
                lead_speed = math.hypot(*p.velocity)
                cap = max(0.0, lead_speed + 0.6 * (gap - FOLLOW_GAP))
                cost += 50.0 * np.clip(V - cap, 0, None)
    if w.obstacles:
        wd = _segments_distance(traj, w.obstacles) - robot_radius
        cost += 1.5 * np.exp(-np.clip(wd, 0, None) / 0.15).max(axis=1)
        cost += 200.0 * (wd.min(axis=1) < 0.05)

    best = int(np.argmin(cost))
    return float(V[best]), float(OM[best])
