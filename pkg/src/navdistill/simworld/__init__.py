"""Deterministic 2D social-navigation simulator and dataset writer."""

from navdistill.simworld.dataset import DatasetConfig, DatasetManifest, make_dataset, read_episode
from navdistill.simworld.narrate import narrate
from navdistill.simworld.render import render_observation
from navdistill.simworld.scenarios import generate_episode, initial_world
from navdistill.simworld.types import (
    EMPTY_NARRATION,
    SCENARIOS,
    Behavior,
    Episode,
    Narration,
    PedestrianState,
    ScenarioKind,
    WorldState,
    to_body_frame,
    wrap_angle,
)
from navdistill.simworld.vocab import VOCAB, VOCAB_SIZE
from navdistill.simworld.world import check_collision, step_world

__all__ = [
    "Behavior",
    "DatasetConfig",
    "DatasetManifest",
    "EMPTY_NARRATION",
    "Episode",
    "Narration",
    "PedestrianState",
    "SCENARIOS",
    "ScenarioKind",
    "VOCAB",
    "VOCAB_SIZE",
    "WorldState",
    "check_collision",
    "generate_episode",
    "initial_world",
    "make_dataset",
    "narrate",
    "read_episode",
    "render_observation",
    "step_world",
    "to_body_frame",
    "wrap_angle",
]
