"""Scenario scripts and episode generation."""

from __future__ import annotations

import math

import numpy as np

from navdistill.config import SimConfig
from navdistill.errors import ContractError
from navdistill.simworld.expert import ExpertState, expert_command
from navdistill.simworld.narrate import narrate
from navdistill.simworld.render import render_observation
from navdistill.simworld.types import (
    SCENARIOS,
    Behavior,
    Episode,
    PedestrianState,
    ScenarioKind,
    WorldState,
    to_body_frame,
)
from navdistill.simworld.world import clamp_command, step_world


def _ped(pos, vel, radius, behavior, turn_rate=0.0, turn=0.0) -> PedestrianState:
    return PedestrianState(
        (float(pos[0]), float(pos[1])),
        (float(vel[0]), float(vel[1])),
        float(radius),
        behavior,
        float(turn_rate),
        float(turn),
    )


def _radius(rng) -> float:
    return rng.uniform(0.2, 0.3)


def _crowd(rng):
    goal = (rng.uniform(7.0, 9.0), rng.uniform(-1.5, 1.5))
    peds = []
    for _ in range(int(rng.integers(4, 7))):
        kind = rng.choice(["standing", "crossing", "approaching"], p=[0.4, 0.35, 0.25])
        if kind == "standing":
            pos = (rng.uniform(2.5, 8.0), rng.uniform(-2.5, 2.5))
            peds.append(_ped(pos, (0, 0), _radius(rng), Behavior.STANDING))
        elif kind == "crossing":
            side = rng.choice([-1.0, 1.0])
            pos = (rng.uniform(2.5, 8.0), side * rng.uniform(2.5, 5.0))
            peds.append(_ped(pos, (rng.uniform(-0.1, 0.1), -side * rng.uniform(0.6, 1.2)), _radius(rng), Behavior.CROSSING))
        else:
            pos = (rng.uniform(6.0, 11.0), rng.uniform(-2.0, 2.0))
            peds.append(_ped(pos, (-rng.uniform(0.5, 1.0), rng.uniform(-0.1, 0.1)), _radius(rng), Behavior.APPROACHING))
    return goal, peds, []


def _frontal(rng):
    goal = (rng.uniform(7.0, 9.0), rng.uniform(-1.0, 1.0))
    pos = (rng.uniform(6.0, 9.0), rng.uniform(-0.4, 0.4))
    vel = (-rng.uniform(0.6, 1.1), rng.uniform(-0.05, 0.05))
    return goal, [_ped(pos, vel, _radius(rng), Behavior.APPROACHING)], []


def _following(rng):
    goal = (rng.uniform(8.0, 10.0), rng.uniform(-1.0, 1.0))
    pos = np.array([rng.uniform(1.6, 2.6), rng.uniform(-0.3, 0.3)])
    speed = rng.uniform(0.5, 0.8)
    direction = np.asarray(goal) - pos
    direction = direction / np.linalg.norm(direction)
    peds = [_ped(pos, speed * direction, _radius(rng), Behavior.LEADING)]
    if rng.random() < 0.5:
        peds.append(_ped((rng.uniform(4.0, 9.0), rng.choice([-1, 1]) * rng.uniform(1.8, 3.0)), (0, 0), _radius(rng), Behavior.STANDING))
    return goal, peds, []


def _narrow(rng):
    width = rng.uniform(1.7, 2.4)
    yc = rng.uniform(-0.3, 0.3)
    x0, x1 = rng.uniform(1.0, 2.0), rng.uniform(8.5, 10.0)
    walls = [((x0, yc + width / 2), (x1, yc + width / 2)), ((x0, yc - width / 2), (x1, yc - width / 2))]
    goal = (x1 + rng.uniform(0.5, 1.5), yc + rng.uniform(-0.3, 0.3))
    side = rng.choice([-1.0, 1.0])
    lane = yc + side * width / 4
    if rng.random() < 0.7:
        ped = _ped((rng.uniform(7.0, 10.0), lane), (-rng.uniform(0.5, 0.9), 0.0), _radius(rng), Behavior.APPROACHING)
    else:
        ped = _ped((rng.uniform(3.5, 7.0), lane), (0, 0), _radius(rng), Behavior.STANDING)
    return goal, [ped], walls


def _intersection(rng):
    half = rng.uniform(2.0, 2.6)
    xa, xb = rng.uniform(2.5, 3.5), rng.uniform(6.0, 7.0)
    walls = [
        ((0.5, half), (xa, half)),
        ((0.5, -half), (xa, -half)),
        ((xb, half), (11.0, half)),
        ((xb, -half), (11.0, -half)),
    ]
    turn = rng.choice(["straight", "left", "right"])
    xm = 0.5 * (xa + xb)
    if turn == "straight":
        goal = (rng.uniform(8.5, 10.0), rng.uniform(-0.8, 0.8))
    else:
        goal = (xm + rng.uniform(-0.5, 0.5), (1 if turn == "left" else -1) * rng.uniform(4.0, 5.0))
    peds = []
    for _ in range(int(rng.integers(1, 4))):
        # on a turn, pedestrians come from the goal's side street so they walk away from it
        side = rng.choice([-1.0, 1.0]) if turn == "straight" else (1.0 if turn == "left" else -1.0)
        pos = (rng.uniform(xa + 0.4, xb - 0.4), side * rng.uniform(3.0, 6.0))
        if rng.random() < 0.65:
            peds.append(_ped(pos, (rng.uniform(-0.1, 0.1), -side * rng.uniform(0.6, 1.1)), _radius(rng), Behavior.CROSSING))
        else:
            # walks in from the side street, then turns toward the robot's start
            speed = rng.uniform(0.6, 1.0)
            rate = -side * rng.uniform(0.3, 0.6)
            peds.append(_ped(pos, (0.0, -side * speed), _radius(rng), Behavior.TURNING, rate, math.pi / 2))
    return goal, peds, walls


_SCRIPTS = {
    ScenarioKind.CROWD: _crowd,
    ScenarioKind.FRONTAL_APPROACH: _frontal,
    ScenarioKind.HUMAN_FOLLOWING: _following,
    ScenarioKind.NARROW_PASSAGEWAY: _narrow,
    ScenarioKind.INTERSECTION: _intersection,
}


def initial_world(kind: ScenarioKind, seed: int) -> tuple[WorldState, np.ndarray]:
    """Initial world and goal (world frame == step-0 body frame) for a scenario instance."""
    if seed < 0:
        raise ContractError("seed must be non-negative")
    kind = ScenarioKind(kind)
    rng = np.random.default_rng([SCENARIOS.index(kind), seed])
    goal, peds, walls = _SCRIPTS[kind](rng)
    w = WorldState((0.0, 0.0, 0.0), (0.0, 0.0), tuple(peds), tuple(walls), 0.0)
    return w, np.array(goal, dtype=np.float64)


def body_frame_labels(poses: np.ndarray, horizon: int, count: int) -> np.ndarray:
    labels = np.empty((count, horizon, 2))
    for k in range(count):
        labels[k] = to_body_frame(poses[k], poses[k + 1 : k + 1 + horizon, :2])
    return labels


def generate_episode(kind: ScenarioKind, seed: int, cfg: SimConfig | None = None) -> Episode:
    cfg = cfg or SimConfig()
    cfg.validate_episode()
    w, goal = initial_world(kind, seed)
    n, hf = cfg.steps, cfg.horizon
    expert = ExpertState()

    states = [w]
    commands = []
    for _ in range(n + hf - 1):
        cmd = clamp_command(*expert_command(states[-1], goal, expert, cfg.robot_radius, cfg.expert_max_speed))
        commands.append(cmd)
        states.append(step_world(states[-1], cmd, cfg.dt))
    all_poses = np.array([s.robot_pose for s in states])
    labels = body_frame_labels(all_poses, hf, n)

    frames = np.stack([render_observation(s, cfg) for s in states[:n]])
    narrations = [
        narrate(states[k], labels[k], horizon=hf, dt=cfg.dt, fov_deg=cfg.fov_deg,
                max_range=cfg.max_range, robot_radius=cfg.robot_radius)
        for k in range(n)
    ]
    return Episode(
        scenario=ScenarioKind(kind),
        seed=int(seed),
        frames=frames,
        poses=all_poses[:n],
        commands=np.array(commands[:n]),
        labels=labels,
        narrations=narrations,
        goal=goal,
        states=states[:n],
        tail_poses=all_poses[n:],
        dt=cfg.dt,
    )
