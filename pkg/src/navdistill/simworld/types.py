from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

MAX_PEDESTRIAN_SPEED = 2.0


class ScenarioKind(str, enum.Enum):
    CROWD = "Crowd"
    FRONTAL_APPROACH = "FrontalApproach"
    HUMAN_FOLLOWING = "HumanFollowing"
    NARROW_PASSAGEWAY = "NarrowPassageway"
    INTERSECTION = "Intersection"

    @classmethod
    def parse(cls, name: str) -> "ScenarioKind":
        for kind in cls:
            if name in (kind.value, kind.name):
                return kind
        raise ValueError(f"unknown scenario {name!r}; expected one of {[k.value for k in cls]}")


SCENARIOS = tuple(ScenarioKind)


class Behavior(str, enum.Enum):
    CROSSING = "crossing"
    APPROACHING = "approaching"
    LEADING = "leading"
    STANDING = "standing"
    TURNING = "turning"


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    w = math.remainder(a, 2.0 * math.pi)
    return math.pi if w == -math.pi else w


@dataclass(frozen=True)
class PedestrianState:
    position: tuple[float, float]
    velocity: tuple[float, float]
    radius: float
    behavior: Behavior
    # heading change per second and the total angle still to turn (turning only)
    turn_rate: float = 0.0
    turn_remaining: float = 0.0

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("pedestrian radius must be positive")
        if math.hypot(*self.velocity) > MAX_PEDESTRIAN_SPEED + 1e-12:
            raise ValueError("pedestrian speed exceeds 2 m/s")

    def to_json(self) -> dict:
        return {
            "position": list(self.position),
            "velocity": list(self.velocity),
            "radius": self.radius,
            "behavior": self.behavior.value,
            "turn_rate": self.turn_rate,
            "turn_remaining": self.turn_remaining,
        }

    @classmethod
    def from_json(cls, d: dict) -> "PedestrianState":
        return cls(
            position=tuple(d["position"]),
            velocity=tuple(d["velocity"]),
            radius=d["radius"],
            behavior=Behavior(d["behavior"]),
            turn_rate=d.get("turn_rate", 0.0),
            turn_remaining=d.get("turn_remaining", 0.0),
        )


Wall = tuple[tuple[float, float], tuple[float, float]]


@dataclass(frozen=True)
class WorldState:
    robot_pose: tuple[float, float, float] = (0.0, 0.0, 0.0)
    robot_vel: tuple[float, float] = (0.0, 0.0)
    pedestrians: tuple[PedestrianState, ...] = ()
    obstacles: tuple[Wall, ...] = ()
    time: float = 0.0

    def with_pedestrians(self, peds) -> "WorldState":
        return replace(self, pedestrians=tuple(peds))


def to_body_frame(pose, points) -> np.ndarray:
    """Express world-frame points (..., 2) in the body frame of ``pose`` (x fwd, y left)."""
    x, y, h = pose
    pts = np.asarray(points, dtype=np.float64)
    dx = pts[..., 0] - x
    dy = pts[..., 1] - y
    c, s = math.cos(h), math.sin(h)
    return np.stack([c * dx + s * dy, -s * dx + c * dy], axis=-1)


def to_world_frame(pose, points) -> np.ndarray:
    x, y, h = pose
    pts = np.asarray(points, dtype=np.float64)
    c, s = math.cos(h), math.sin(h)
    return np.stack(
        [x + c * pts[..., 0] - s * pts[..., 1], y + s * pts[..., 0] + c * pts[..., 1]], axis=-1
    )


SECTIONS = ("scene", "humans", "traj", "reason")


@dataclass(frozen=True)
class Narration:
    tokens: tuple[str, ...]

    @property
    def text(self) -> str:
        return " ".join(self.tokens)

    @property
    def sections(self) -> dict[str, tuple[str, ...]]:
        out: dict[str, list[str]] = {}
        current: Optional[str] = None
        for tok in self.tokens:
            if tok.startswith("<") and tok.endswith(">") and tok[1:-1] in SECTIONS:
                current = tok[1:-1]
                out[current] = []
            elif current is not None:
                out[current].append(tok)
        return {k: tuple(v) for k, v in out.items()}

    @classmethod
    def from_text(cls, text: str) -> "Narration":
        return cls(tuple(text.split()))


EMPTY_NARRATION = Narration(())


@dataclass
class Episode:
    scenario: ScenarioKind
    seed: int
    frames: np.ndarray  # (n, H, W, C) float32, multiples of 1/255
    poses: np.ndarray  # (n, 3)
    commands: np.ndarray  # (n, 2): command applied at step k, leading to pose k+1
    labels: np.ndarray  # (n, H_f, 2)
    narrations: list[Narration]
    goal: np.ndarray  # (2,), step-0 body frame
    states: list[WorldState] = field(default_factory=list)
    tail_poses: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    dt: float = 0.5

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def obstacles(self) -> tuple[Wall, ...]:
        return self.states[0].obstacles if self.states else ()

    def goal_in_body_frame(self, step: int) -> np.ndarray:
        """The episode goal (stored in the step-0 frame) seen from ``poses[step]``."""
        world_goal = to_world_frame(self.poses[0], self.goal)
        return to_body_frame(self.poses[step], world_goal)
