"""Template narrations built from simulator ground truth.

Four sections: scene context (per-pedestrian distance / bearing / behavior
buckets), human intentions, a summary of the robot's own upcoming trajectory,
and a short reasoning phrase tying the two together.
"""

from __future__ import annotations

import math

import numpy as np

from navdistill.errors import ContractError
from navdistill.simworld.types import Behavior, Narration, WorldState, to_body_frame
from navdistill.simworld.world import point_segment_distance

NEAR, MID = 2.0, 5.0
CENTER_HALF_WIDTH = math.radians(15.0)
STOP_DISPLACEMENT = 0.1
VEER_ANGLE = 0.2
SLOW_SPEED = 0.45
MAX_MENTIONED = 4
CONFLICT_MARGIN = 0.4

_INTENT = {
    Behavior.CROSSING: ("will", "cross", "path"),
    Behavior.APPROACHING: ("come", "toward", "robot"),
    Behavior.LEADING: ("walk", "ahead"),
    Behavior.STANDING: ("stay", "still"),
    Behavior.TURNING: ("will", "turn"),
}
_COUNT = {1: "one", 2: "two", 3: "three", 4: "four"}


def distance_bucket(d: float) -> str:
    if d < NEAR:
        return "near"
    if d < MID:
        return "mid"
    return "far"


def bearing_bucket(b: float) -> str:
    if b >= CENTER_HALF_WIDTH:
        return "left"
    if b <= -CENTER_HALF_WIDTH:
        return "right"
    return "center"


def trajectory_summary(future: np.ndarray, dt: float = 0.5) -> tuple[str, ...]:
    end = future[-1]
    net = math.hypot(end[0], end[1])
    if net < STOP_DISPLACEMENT:
        return ("stop",)
    theta = math.atan2(end[1], end[0])
    if theta > VEER_ANGLE:
        shape = ("veer", "left")
    elif theta < -VEER_ANGLE:
        shape = ("veer", "right")
    else:
        shape = ("continue", "straight")
    speed = "slow" if net / (len(future) * dt) < SLOW_SPEED else "fast"
    return shape + (speed,)


def visible_pedestrians(w: WorldState, fov_deg: float = 90.0, max_range: float = 8.0):
    """(index, distance, bearing) of pedestrians in view, nearest first."""
    if not w.pedestrians:
        return []
    body = to_body_frame(w.robot_pose, [p.position for p in w.pedestrians])
    out = []
    half = math.radians(fov_deg) / 2.0
    for i, (bx, by) in enumerate(body):
        d = math.hypot(bx, by)
        b = math.atan2(by, bx)
        if abs(b) <= half and d <= max_range:
            out.append((i, d, b))
    out.sort(key=lambda t: (t[1], t[0]))
    return out


def _conflicts(w: WorldState, idx: int, future: np.ndarray, dt: float, robot_radius: float) -> bool:
    p = w.pedestrians[idx]
    h = w.robot_pose[2]
    c, s = math.cos(h), math.sin(h)
    rel = to_body_frame(w.robot_pose, [p.position])[0]
    vel = np.array([c * p.velocity[0] + s * p.velocity[1], -s * p.velocity[0] + c * p.velocity[1]])
    limit = robot_radius + p.radius + CONFLICT_MARGIN
    path = np.vstack([[0.0, 0.0], future])
    for j in range(len(path)):
        ped = rel + vel * j * dt
        if math.hypot(*(ped - path[j])) < limit:
            return True
    return False


def narrate(
    w: WorldState,
    future,
    horizon: int = 5,
    dt: float = 0.5,
    fov_deg: float = 90.0,
    max_range: float = 8.0,
    robot_radius: float = 0.3,
) -> Narration:
    future = np.asarray(future, dtype=np.float64)
    if future.ndim != 2 or future.shape != (horizon, 2):
        raise ContractError(f"future must hold {horizon} waypoints, got shape {future.shape}")

    seen = visible_pedestrians(w, fov_deg, max_range)
    mentioned = seen[:MAX_MENTIONED]

    scene = ["<scene>"]
    if not seen:
        scene += ["no", "pedestrians"]
    else:
        n = len(seen)
        scene += [_COUNT.get(n, "many"), "pedestrian" if n == 1 else "pedestrians"]
        for i, d, b in mentioned:
            scene += ["pedestrian", distance_bucket(d), bearing_bucket(b), w.pedestrians[i].behavior.value]
    x, y, _ = w.robot_pose
    wall_d = [point_segment_distance((x, y), a, b) for a, b in w.obstacles]
    narrow = len(wall_d) >= 2 and sorted(wall_d)[1] < 1.5
    if narrow:
        scene += ["narrow", "passage"]
    elif wall_d and min(wall_d) < 4.0:
        scene += ["walls"]
    else:
        scene += ["open", "area"]

    conflict = {i: _conflicts(w, i, future, dt, robot_radius) for i, _, _ in mentioned}
    humans = ["<humans>"]
    if not mentioned:
        humans.append("none")
    for i, _, _ in mentioned:
        humans += ["pedestrian", *_INTENT[w.pedestrians[i].behavior], "conflict" if conflict[i] else "clear"]

    summary = trajectory_summary(future, dt)
    traj = ["<traj>", *summary]

    any_conflict = any(conflict.values())
    leading = any(w.pedestrians[i].behavior is Behavior.LEADING for i, _, _ in mentioned)
    if not mentioned:
        reason = ["keep", "center", "of", "passage"] if narrow else ["path", "clear", "proceed"]
    elif any_conflict and summary[-1] in ("stop", "slow"):
        reason = ["yield", "to", "pedestrian", "wait", "until", "path", "clears"]
    elif any_conflict and summary[0] == "veer":
        reason = ["pass", "on", summary[1], "side", "of", "pedestrian"]
    elif leading:
        reason = ["follow", "pedestrian", "keep", "distance"]
    elif any_conflict:
        reason = ["avoid", "pedestrian", "move", "carefully"]
    else:
        reason = ["path", "clear", "proceed"]

    tokens = tuple(scene + humans + traj + ["<reason>", *reason])
    return Narration(tokens)
