"""Configuration sections, JSON loading and content hashing.

Every section rejects unknown keys. ``config_hash`` digests a canonical JSON
form so artifacts produced under different settings can be told apart.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path
from typing import Any, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from navdistill.errors import ConfigError


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class SimConfig(_Section):
    dt: float = 0.5
    steps: int = 32
    image_height: int = 64
    image_width: int = 64
    channels: int = 3
    horizon: int = Field(5, ge=1)
    history: int = Field(5, ge=1)
    fov_deg: float = 90.0
    max_range: float = 8.0
    robot_radius: float = Field(0.3, gt=0)
    expert_max_speed: float = 0.9

    def validate_episode(self) -> None:
        if self.dt <= 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if not 20 <= self.steps <= 60:
            raise ConfigError(f"episode length must be within 20..60 steps, got {self.steps}")


class ModelConfig(_Section):
    d_model: int = Field(256, ge=4)
    layers: int = Field(6, ge=1)
    heads: int = Field(8, ge=1)
    mlp_ratio: int = 4
    conv_channels: tuple[int, int, int, int] = (32, 64, 128, 128)
    decoder_hidden: int = 512
    projector_hidden: int = 512
    projector_dim: int = 128
    vocab_size: int = 128

    @model_validator(mode="after")
    def _heads_divide(self) -> "ModelConfig":
        if self.d_model % self.heads:
            raise ValueError("d_model must be divisible by heads")
        return self


class TrainRunConfig(_Section):
    learning_rate: float = Field(2e-4, gt=0)
    weight_decay: float = Field(0.01, ge=0)
    epochs: int = Field(20, ge=1)
    batch_size: int = Field(32, ge=1)
    seed: int = 0
    # overrides epochs when set: an exact number of optimizer steps
    steps: Optional[int] = Field(None, ge=1)
    max_train_samples: Optional[int] = Field(None, ge=1)
    mask_prob: float = Field(0.5, ge=0, le=1)
    grad_clip: Optional[float] = 1.0
    schedule: Literal["constant", "cosine"] = "cosine"
    # teacher only: chance of hiding a sample's input waypoints behind a learned mask token
    action_dropout: float = Field(0.0, ge=0, le=1)


class PretrainConfig(_Section):
    model_config = ConfigDict(extra="forbid", validate_assignment=True, populate_by_name=True)

    lambd: float = Field(5e-3, gt=0, alias="lambda")
    mask_prob: float = Field(0.5, ge=0, le=1)
    batch_size: int = Field(64, ge=1)
    epochs: int = Field(20, ge=1)
    steps: Optional[int] = Field(None, ge=1)
    learning_rate: float = Field(2e-4, gt=0)
    weight_decay: float = Field(0.01, ge=0)
    seed: int = 0
    no_text: bool = False
    # the teacher's target ctx is computed with its waypoint inputs behind the mask token
    hide_teacher_waypoints: bool = False
    max_train_samples: Optional[int] = Field(None, ge=1)
    grad_clip: Optional[float] = 1.0
    schedule: Literal["constant", "cosine"] = "cosine"


class ControllerConfig(_Section):
    min_lookahead: float = Field(0.2, ge=0.2)
    lookahead_gain: float = Field(0.6, ge=0)
    cruise_speed: float = Field(0.8, gt=0, le=1.6)
    goal_tolerance: float = Field(0.5, gt=0)
    time_budget: float = Field(30.0, gt=0)
    taper_distance: float = Field(0.4, gt=0)
    control_substeps: int = Field(5, ge=1)
    robot_radius: float = Field(0.3, gt=0)


class EvalConfig(_Section):
    split: str = "test"
    trials: int = Field(10, ge=1)
    scenario: str = "FrontalApproach"


class Config(_Section):
    sim: SimConfig = Field(default_factory=SimConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    teacher: TrainRunConfig = Field(default_factory=TrainRunConfig)
    pretrain: PretrainConfig = Field(default_factory=PretrainConfig)
    finetune: TrainRunConfig = Field(default_factory=TrainRunConfig)
    controller: ControllerConfig = Field(default_factory=ControllerConfig)
    eval: EvalConfig = Field(default_factory=EvalConfig)
    seed: int = 0

    def to_json(self) -> str:
        return canonical_json(self.model_dump(mode="json", by_alias=True))

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Config":
        try:
            return cls.model_validate(data)
        except ValidationError as exc:
            raise ConfigError(str(exc).splitlines()[0] + ": " + _first_error(exc)) from exc

    def with_seed(self, seed: int) -> "Config":
        cfg = self.model_copy(deep=True)
        cfg.seed = seed
        for section in (cfg.teacher, cfg.pretrain, cfg.finetune):
            section.seed = seed
        return cfg


def _first_error(exc: ValidationError) -> str:
    err = exc.errors()[0]
    loc = ".".join(str(p) for p in err["loc"])
    return f"{loc}: {err['msg']}"


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def digest(obj: Any) -> str:
    if not isinstance(obj, (str, bytes)):
        obj = canonical_json(obj)
    if isinstance(obj, str):
        obj = obj.encode()
    return hashlib.sha256(obj).hexdigest()[:16]


def model_config_hash(sim: SimConfig, model: ModelConfig) -> str:
    """Hash of everything that fixes parameter shapes and input geometry."""
    payload = {
        "model": model.model_dump(mode="json"),
        "image": [sim.image_height, sim.image_width, sim.channels],
        "horizon": sim.horizon,
        "history": sim.history,
    }
    return digest(payload)


def load_config(path: Optional[str | os.PathLike] = None) -> Config:
    """Read a JSON config (or defaults), then apply the ``N2N_SEED`` override."""
    if path is None:
        cfg = Config()
    else:
        try:
            raw = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"config {path} must hold a JSON object")
        cfg = Config.from_dict(raw)
    env_seed = os.environ.get("N2N_SEED")
    if env_seed is not None:
        try:
            cfg = cfg.with_seed(int(env_seed))
        except ValueError as exc:
            raise ConfigError(f"N2N_SEED must be an integer, got {env_seed!r}") from exc
    return cfg


def long_preset() -> Config:
    """Full-scale settings: 6x256x8 transformer, lr 2e-4, 267 / 747 epochs."""
    cfg = Config()
    cfg.teacher = TrainRunConfig(learning_rate=2e-4, epochs=267)
    cfg.pretrain = PretrainConfig(learning_rate=2e-4, epochs=373)
    cfg.finetune = TrainRunConfig(learning_rate=2e-4, epochs=374)
    return cfg


def desk_preset() -> Config:
    """Small CPU-friendly settings (2x64x4 transformer) used by tests and the demo."""
    cfg = Config()
    cfg.model = ModelConfig(
        d_model=64,
        layers=2,
        heads=4,
        conv_channels=(8, 16, 32, 32),
        decoder_hidden=128,
        projector_hidden=128,
        projector_dim=32,
    )
    cfg.teacher = TrainRunConfig(learning_rate=1e-3, epochs=10, batch_size=64, action_dropout=0.5)
    cfg.pretrain = PretrainConfig(learning_rate=1e-3, epochs=10, batch_size=64, hide_teacher_waypoints=True)
    cfg.finetune = TrainRunConfig(learning_rate=1e-3, epochs=10, batch_size=64)
    return cfg


PRESETS = {"default": Config, "long": long_preset, "desk": desk_preset}
