"""Pure pursuit tracking and closed-loop rollouts of a policy in the simulator."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from navdistill.checkpoint import Checkpoint
from navdistill.config import ControllerConfig, SimConfig
from navdistill.errors import ContractError
from navdistill.simworld.render import render_observation
from navdistill.simworld.scenarios import initial_world
from navdistill.simworld.types import ScenarioKind, WorldState, to_body_frame, to_world_frame
from navdistill.simworld.world import OMEGA_MAX, V_MAX, check_collision, step_world

Policy = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _as_traj(traj) -> np.ndarray:
    t = np.asarray(traj, dtype=np.float64).reshape(-1, 2) if np.size(traj) else np.zeros((0, 2))
    if len(t) == 0:
        raise ContractError("trajectory is empty")
    if not np.isfinite(t).all():
        raise ContractError("trajectory must be finite")
    return t


def path_length(traj) -> float:
    pts = np.vstack([[0.0, 0.0], _as_traj(traj)])
    return float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())


def lookahead_point(traj, distance: float) -> np.ndarray:
    """First point along origin -> waypoints at ``distance`` from the origin, else the last waypoint."""
    pts = np.vstack([[0.0, 0.0], _as_traj(traj)])
    for p0, p1 in zip(pts[:-1], pts[1:]):
        if np.hypot(*p1) < distance:
            continue
        d = p1 - p0
        a, b, c = d @ d, 2.0 * (p0 @ d), p0 @ p0 - distance * distance
        if a == 0.0:
            return p1.copy()
        # c <= 0 here (p0 lies inside the circle), so the larger root is in [0, 1]
        s = (-b + math.sqrt(max(b * b - 4.0 * a * c, 0.0))) / (2.0 * a)
        return p0 + min(max(s, 0.0), 1.0) * d
    return pts[-1].copy()


def pursuit_command(point, v: float) -> tuple[float, float]:
    """Steer toward a body-frame point at speed ``v``: curvature 2y/L^2, both outputs clamped."""
    x, y = float(point[0]), float(point[1])
    dist_sq = x * x + y * y
    v = min(max(v, 0.0), V_MAX)
    if dist_sq == 0.0:
        return v, 0.0
    kappa = 2.0 * y / dist_sq
    return v, min(max(v * kappa, -OMEGA_MAX), OMEGA_MAX)


def pure_pursuit(traj, cfg: ControllerConfig = ControllerConfig()) -> tuple[float, float]:
    """(v, omega) that tracks a body-frame waypoint list.

    Speed is the cruise speed, ramped down linearly over the final
    ``taper_distance`` of the path; lookahead grows with that speed.
    """
    t = _as_traj(traj)
    v = cfg.cruise_speed * min(1.0, path_length(t) / cfg.taper_distance)
    lookahead = max(cfg.min_lookahead, cfg.lookahead_gain * v)
    return pursuit_command(lookahead_point(t, lookahead), v)


@dataclass
class RolloutResult:
    success: bool
    collisions: int
    path: list = field(default_factory=list)
    steps: int = 0
    final_goal_distance: float = float("inf")
    scenario: str = ""
    seed: int = 0

    def row(self) -> dict:
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "success": int(self.success),
            "collisions": self.collisions,
            "steps": self.steps,
            "final_goal_distance": round(self.final_goal_distance, 6),
        }


def _resolve_policy(policy: Union[Checkpoint, Policy]) -> tuple[Policy, int]:
    if isinstance(policy, Checkpoint):
        from navdistill.student import StudentPolicy

        policy = StudentPolicy(policy)
    history = getattr(policy, "history", 5)
    return policy, history


def rollout_closed_loop(
    policy: Union[Checkpoint, Policy],
    kind: ScenarioKind | str,
    seed: int,
    cfg: ControllerConfig = ControllerConfig(),
    sim: Optional[SimConfig] = None,
    start: Optional[tuple[WorldState, np.ndarray]] = None,
) -> RolloutResult:
    """Drive a policy through one seeded scenario.

    Each policy tick renders a view, queries the policy on the last
    ``history`` frames with the goal in the current body frame, and tracks
    the returned waypoints with pure pursuit for ``control_substeps`` ticks.
    Collisions are counted once per contact episode. ``start`` replaces the
    scripted scenario with an explicit (world, body-frame goal) pair.
    """
    kind = ScenarioKind.parse(kind) if isinstance(kind, str) else kind
    policy, history = _resolve_policy(policy)
    sim = sim or getattr(getattr(policy, "model", None), "sim_cfg", None) or SimConfig()
    world, goal = start if start is not None else initial_world(kind, seed)
    goal_world = to_world_frame(world.robot_pose, goal)
    max_steps = int(round(cfg.time_budget / sim.dt))
    sub_dt = sim.dt / cfg.control_substeps

    buffer: list[np.ndarray] = []
    path = [world.robot_pose]
    collisions, in_contact, success = 0, False, False
    steps = 0
    for steps in range(1, max_steps + 1):
        frame = render_observation(world, sim)
        buffer = buffer[1:] + [frame] if buffer else [frame] * history
        goal_body = to_body_frame(world.robot_pose, goal_world)
        traj = np.asarray(policy(np.stack(buffer), goal_body), dtype=np.float64).reshape(-1, 2)
        traj_world = to_world_frame(world.robot_pose, traj)
        for _ in range(cfg.control_substeps):
            cmd = pure_pursuit(to_body_frame(world.robot_pose, traj_world), cfg)
            world = step_world(world, cmd, sub_dt)
            touching = check_collision(world, cfg.robot_radius)
            collisions += touching and not in_contact
            in_contact = touching
            if np.hypot(*(np.array(world.robot_pose[:2]) - goal_world)) <= cfg.goal_tolerance:
                success = True
                break
        path.append(world.robot_pose)
        if success:
            break
    dist = float(np.hypot(*(np.array(world.robot_pose[:2]) - goal_world)))
    return RolloutResult(success, int(collisions), path, steps, dist, kind.value, int(seed))


def straight_line_policy(frames, goal) -> np.ndarray:
    """Scripted policy: five evenly spaced waypoints toward the goal (at most 2 m out)."""
    g = np.asarray(goal, dtype=np.float64)
    n = float(np.hypot(*g))
    reach = min(n, 2.0)
    direction = g / n if n > 0 else np.array([1.0, 0.0])
    return np.outer(np.linspace(reach / 5, reach, 5), direction)


def zero_velocity_policy(frames, goal) -> np.ndarray:
    return np.zeros((5, 2))
