from __future__ import annotations

import math

import numpy as np

from navdistill.simworld.types import Behavior, PedestrianState, WorldState, wrap_angle

V_MIN, V_MAX = 0.0, 1.6
OMEGA_MAX = 1.5


def clamp_command(v: float, omega: float) -> tuple[float, float]:
    return min(max(v, V_MIN), V_MAX), min(max(omega, -OMEGA_MAX), OMEGA_MAX)


def advance_pedestrian(p: PedestrianState, dt: float) -> PedestrianState:
    x, y = p.position
    vx, vy = p.velocity
    pos = (x + vx * dt, y + vy * dt)
    remaining = p.turn_remaining
    if p.behavior is Behavior.TURNING and p.turn_rate and remaining > 0:
        step = min(abs(p.turn_rate) * dt, remaining)
        remaining -= step
        a = math.copysign(step, p.turn_rate)
        c, s = math.cos(a), math.sin(a)
        vel = (c * vx - s * vy, s * vx + c * vy)
    elif p.behavior is Behavior.STANDING:
        vel = (0.0, 0.0)
    else:
        vel = (vx, vy)
    return PedestrianState(pos, vel, p.radius, p.behavior, p.turn_rate, remaining)


def step_world(w: WorldState, cmd: tuple[float, float], dt: float) -> WorldState:
    """Advance one tick: clamped unicycle for the robot, scripted motion for pedestrians."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    v, omega = clamp_command(*cmd)
    x, y, h = w.robot_pose
    pose = (x + v * math.cos(h) * dt, y + v * math.sin(h) * dt, wrap_angle(h + omega * dt))
    peds = tuple(advance_pedestrian(p, dt) for p in w.pedestrians)
    return WorldState(pose, (v, omega), peds, w.obstacles, w.time + dt)


def point_segment_distance(p, a, b) -> float:
    px, py = p
    ax, ay = a
    bx, by = b
    dx, dy = bx - ax, by - ay
    denom = dx * dx + dy * dy
    t = 0.0 if denom == 0 else min(max(((px - ax) * dx + (py - ay) * dy) / denom, 0.0), 1.0)
    return math.hypot(px - (ax + t * dx), py - (ay + t * dy))


def check_collision(w: WorldState, robot_radius: float) -> bool:
    """Strict contact test against pedestrians and wall segments."""
    if robot_radius <= 0:
        raise ValueError("robot_radius must be positive")
    x, y, _ = w.robot_pose
    for p in w.pedestrians:
        if math.hypot(p.position[0] - x, p.position[1] - y) < robot_radius + p.radius:
            return True
    return any(point_segment_distance((x, y), a, b) < robot_radius for a, b in w.obstacles)


def pedestrian_arrays(w: WorldState) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if not w.pedestrians:
        z = np.zeros((0, 2))
        return z, z.copy(), np.zeros(0)
    pos = np.array([p.position for p in w.pedestrians], dtype=np.float64)
    vel = np.array([p.velocity for p in w.pedestrians], dtype=np.float64)
    rad = np.array([p.radius for p in w.pedestrians], dtype=np.float64)
    return pos, vel, rad
