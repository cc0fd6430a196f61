"""RGB-only student: Barlow Twins alignment to the frozen teacher, then trajectory fine-tuning."""

from __future__ import annotations

import logging
from typing import Optional

import numpy as np
import torch
from torch import nn

from navdistill.checkpoint import Checkpoint, require_stage
from navdistill.config import ModelConfig, PretrainConfig, SimConfig, TrainRunConfig, model_config_hash
from navdistill.data import SampleSet, limit
from navdistill.encoders import MASK, GoalEncoder, is_mask
from navdistill.errors import ConfigError, ConfigHashMismatchError, ContractError
from navdistill.losses import barlow_twins_loss, cross_correlation, mse_traj
from navdistill.teacher import SequenceModel, checkpoint_meta, teacher_from_checkpoint
from navdistill.training import optimize, resolve_samples, seeded
from navdistill.transformer import mlp

log = logging.getLogger(__name__)


class StudentModel(SequenceModel):
    """Past frames plus an optional goal; the action slot of each state holds a learned placeholder."""

    def __init__(self, model: ModelConfig = ModelConfig(), sim: SimConfig = SimConfig()):
        super().__init__(model, sim, sim.history)
        d = model.d_model
        self.goal = GoalEncoder(d)
        self.placeholder = nn.Parameter(torch.randn(d) * 0.02)
        self.proj_student = mlp(d, model.projector_hidden, model.projector_dim)
        self.proj_teacher = mlp(d, model.projector_hidden, model.projector_dim)

    def states(self, frames: torch.Tensor) -> torch.Tensor:
        if frames.ndim != 5 or frames.shape[1] != self.n_states:
            raise ContractError(f"expected (batch, {self.n_states}, H, W, C) frames, got {tuple(frames.shape)}")
        return self.fusion(self.placeholder, self.vision(frames))

    def forward(self, frames, goals, masked, return_attention: bool = False):
        seq = self.assemble(self.states(frames), self.goal(goals, masked))
        return self.run(seq, return_attention)


def assemble_student_sequence(obs_states, goal_emb, m: StudentModel) -> torch.Tensor:
    if isinstance(obs_states, (list, tuple)):
        if not obs_states:
            raise ContractError("at least one state token is required")
        obs_states = torch.stack(list(obs_states))
    return m.assemble(obs_states.unsqueeze(0), goal_emb.unsqueeze(0))[0]


def _goal_tensors(goal, dtype) -> tuple[torch.Tensor, torch.Tensor]:
    if is_mask(goal):
        return torch.zeros(1, 2, dtype=dtype), torch.ones(1, dtype=torch.bool)
    g = torch.as_tensor(np.asarray(goal, dtype=np.float64), dtype=dtype).reshape(1, 2)
    if not torch.isfinite(g).all():
        raise ContractError("goal must be finite")
    return g, torch.zeros(1, dtype=torch.bool)


def student_observe(frames, goal, m: StudentModel, return_attention: bool = False):
    """One observation window (H_p frames, oldest first) and a goal or ``MASK`` to (ctx output, trajectory)."""
    x = frames if isinstance(frames, torch.Tensor) else torch.as_tensor(np.asarray(frames))
    x = x.to(m.pos.dtype)
    if x.ndim != 4 or x.shape[0] != m.n_states:
        raise ContractError(f"expected {m.n_states} frames, got shape {tuple(x.shape)}")
    g, masked = _goal_tensors(goal, m.pos.dtype)
    out = m(x.unsqueeze(0), g, masked, return_attention)
    if return_attention:
        traj, ctx, maps = out
        return ctx[0], traj[0], [a[0] for a in maps]
    traj, ctx = out
    return ctx[0], traj[0]


def draw_goal_mask(n: int, mask_prob: float, rng: np.random.Generator) -> np.ndarray:
    """Bernoulli(mask_prob) goal-withholding flags."""
    return rng.random(n) < mask_prob


def student_meta(m: StudentModel, seed: int, step: int, metrics: dict, **extra) -> dict:
    return checkpoint_meta(m.model_cfg, m.sim_cfg, seed, step, metrics, **extra)


def student_from_checkpoint(ckpt: Checkpoint, stages=("scratch", "pretrained", "policy")) -> StudentModel:
    require_stage(ckpt, stages)
    m = StudentModel(ModelConfig.model_validate(ckpt.meta["model"]), SimConfig.model_validate(ckpt.meta["sim"]))
    m.load_state_dict(ckpt.state_dict())
    return m


def scratch_checkpoint(model: ModelConfig = ModelConfig(), sim: SimConfig = SimConfig(), seed: int = 0) -> Checkpoint:
    """A randomly initialised student (the no-pretraining baseline starts here)."""
    with seeded(seed):
        m = StudentModel(model, sim)
    return Checkpoint.from_module("scratch", m, student_meta(m, seed, 0, {}))


# -- pretraining ---------------------------------------------------------------


def teacher_context(teacher, samples: SampleSet, no_text: bool = False, hide_waypoints: bool = False,
                    batch_size: int = 256) -> torch.Tensor:
    """Frozen-teacher ctx outputs for every sample (computed once; the teacher never changes)."""
    out = []
    with torch.no_grad():
        for i in range(0, len(samples), batch_size):
            rows = np.arange(i, min(i + batch_size, len(samples)))
            b = samples.batch(rows, no_text=no_text)
            hide = torch.full((len(rows),), True) if hide_waypoints else None
            out.append(teacher(b["teacher_frames"], b["labels"], b["text"], hide=hide)[1])
    return torch.cat(out)


def projection_alignment(m: StudentModel, samples: SampleSet, ctx_t: torch.Tensor, goal_masked: bool = False) -> float:
    """Mean diagonal of the cross-correlation between projected student and teacher ctx tokens."""
    zs, zt = [], []
    with torch.no_grad():
        for i in range(0, len(samples), 256):
            rows = np.arange(i, min(i + 256, len(samples)))
            b = samples.batch(rows)
            masked = torch.full((len(rows),), goal_masked)
            _, ctx_s = m(b["student_frames"], b["goals"], masked)
            zs.append(m.proj_student(ctx_s))
            zt.append(m.proj_teacher(ctx_t[rows]))
    return float(torch.diagonal(cross_correlation(torch.cat(zs), torch.cat(zt))).mean())


def pretrain_student(
    data,
    teacher_ckpt: Checkpoint,
    cfg: PretrainConfig = PretrainConfig(),
    init: Optional[Checkpoint] = None,
    val_data=None,
) -> Checkpoint:
    """Align the student's projected ctx with the frozen teacher's by Barlow Twins.

    The teacher sees the future views, their waypoints and the narration
    (or the empty narration when ``cfg.no_text``); the student sees only
    the past frames and a goal that is withheld with probability ``cfg.mask_prob``.
    """
    if cfg.batch_size < 4:
        raise ConfigError("pretraining needs batch_size >= 4 for cross-correlation statistics")
    require_stage(teacher_ckpt, "teacher")
    teacher = teacher_from_checkpoint(teacher_ckpt)
    for p in teacher.parameters():
        p.requires_grad_(False)
    sim = teacher.sim_cfg
    if init is not None:
        if init.config_hash != teacher_ckpt.config_hash:
            raise ConfigHashMismatchError("student and teacher checkpoints were built with different model configs")
        student = student_from_checkpoint(init, ("scratch", "pretrained"))
    else:
        with seeded(cfg.seed):
            student = StudentModel(teacher.model_cfg, sim)
    train = limit(resolve_samples(data, "train", sim.history, sim.horizon, distill_only=True), cfg.max_train_samples, cfg.seed)
    ctx_t = teacher_context(teacher, train, cfg.no_text, cfg.hide_teacher_waypoints)

    val, val_ctx = None, None
    src = val_data if val_data is not None else (data if hasattr(data, "split") and data.split("val") else None)
    if src is not None:
        val = resolve_samples(src, "val", sim.history, sim.horizon, distill_only=True)
        val_ctx = teacher_context(teacher, val, cfg.no_text, cfg.hide_teacher_waypoints)
    init_alignment = projection_alignment(student, val, val_ctx) if val is not None else None

    mask_rng = np.random.default_rng([cfg.seed, 1])
    student.train()

    def loss_fn(rows):
        b = train.batch(rows)
        masked = torch.from_numpy(draw_goal_mask(len(rows), cfg.mask_prob, mask_rng))
        _, ctx_s = student(b["student_frames"], b["goals"], masked)
        return barlow_twins_loss(student.proj_student(ctx_s), student.proj_teacher(ctx_t[rows]), cfg.lambd)

    def on_epoch(_):
        if val is None:
            return {}
        student.eval()
        out = {"val_alignment": projection_alignment(student, val, val_ctx)}
        student.train()
        return out

    # full batches only: a short trailing batch can have identical targets and no variance
    full_batch = max(4, min(cfg.batch_size, len(train)))
    hist = optimize(student.parameters(), loss_fn, len(train), cfg, min_batch=full_batch, on_epoch=on_epoch)
    student.eval()
    metrics = {
        "first_loss": hist["losses"][0],
        "final_loss": hist["losses"][-1],
        "train_history": [e["train_loss"] for e in hist["epochs"]],
        "init_alignment": init_alignment,
        "val_alignment": hist["epochs"][-1].get("val_alignment"),
        "no_text": cfg.no_text,
    }
    log.info("pretraining done: first %.4f final %.4f", metrics["first_loss"], metrics["final_loss"])
    return Checkpoint.from_module(
        "pretrained", student, student_meta(student, cfg.seed, hist["steps"], metrics, teacher_id=teacher_ckpt.id)
    )


# -- fine-tuning and inference -----------------------------------------------------


def predict(m: StudentModel, samples: SampleSet, goal_masked: bool = False, batch_size: int = 256) -> np.ndarray:
    """(N, H_f, 2) trajectories for every sample with the goal provided or withheld."""
    out = []
    with torch.no_grad():
        for i in range(0, len(samples), batch_size):
            rows = np.arange(i, min(i + batch_size, len(samples)))
            b = samples.batch(rows)
            traj, _ = m(b["student_frames"], b["goals"], torch.full((len(rows),), goal_masked))
            out.append(traj.double().numpy())
    return np.concatenate(out) if out else np.zeros((0, m.horizon, 2))


def finetune_student(data, ckpt: Checkpoint, cfg: TrainRunConfig = TrainRunConfig(), val_data=None) -> Checkpoint:
    """Trajectory MSE on every anchor; goals keep being withheld at ``cfg.mask_prob``."""
    student = student_from_checkpoint(ckpt, ("scratch", "pretrained"))
    sim = student.sim_cfg
    train = limit(resolve_samples(data, "train", sim.history, sim.horizon), cfg.max_train_samples, cfg.seed)
    val = None
    src = val_data if val_data is not None else (data if hasattr(data, "split") and data.split("val") else None)
    if src is not None:
        val = resolve_samples(src, "val", sim.history, sim.horizon)

    mask_rng = np.random.default_rng([cfg.seed, 2])
    student.train()

    def loss_fn(rows):
        b = train.batch(rows)
        masked = torch.from_numpy(draw_goal_mask(len(rows), cfg.mask_prob, mask_rng))
        traj, _ = student(b["student_frames"], b["goals"], masked)
        return mse_traj(traj, b["labels"])

    def on_epoch(_):
        if val is None:
            return {}
        student.eval()
        err = np.linalg.norm(predict(student, val) - val.labels, axis=-1).mean()
        student.train()
        return {"val_ade": float(err)}

    hist = optimize(student.parameters(), loss_fn, len(train), cfg, on_epoch=on_epoch)
    student.eval()
    train_ade = float(np.linalg.norm(predict(student, train) - train.labels, axis=-1).mean())
    metrics = {
        "train_ade": train_ade,
        "train_loss": hist["losses"][-1],
        "val_ade": hist["epochs"][-1].get("val_ade"),
        "val_history": [e.get("val_ade") for e in hist["epochs"]],
        "init_stage": ckpt.stage,
    }
    log.info("fine-tuning done: train ADE %.4f val ADE %s", train_ade, metrics["val_ade"])
    return Checkpoint.from_module("policy", student, student_meta(student, cfg.seed, hist["steps"], metrics, init_id=ckpt.id))


class StudentPolicy:
    """Inference wrapper around a ``policy`` checkpoint."""

    def __init__(self, ckpt: Checkpoint):
        self.ckpt = require_stage(ckpt, "policy")
        self.model = student_from_checkpoint(ckpt, ("policy",)).eval()
        self.history = self.model.n_states
        self.config_hash = ckpt.config_hash

    def __call__(self, frames, goal=MASK) -> np.ndarray:
        with torch.no_grad():
            _, traj = student_observe(frames, goal, self.model)
        return traj.double().numpy()


def infer_actions(frames, goal, ckpt) -> np.ndarray:
    """H_f body-frame waypoints for the newest of ``frames`` (oldest first)."""
    policy = ckpt if isinstance(ckpt, StudentPolicy) else StudentPolicy(ckpt)
    return policy(frames, goal)


def check_compatible(a: Checkpoint, b: Checkpoint) -> None:
    if a.config_hash != b.config_hash:
        raise ConfigHashMismatchError(f"config hash {a.config_hash} differs from {b.config_hash}")


__all__ = [
    "MASK",
    "StudentModel",
    "StudentPolicy",
    "assemble_student_sequence",
    "draw_goal_mask",
    "finetune_student",
    "infer_actions",
    "model_config_hash",
    "pretrain_student",
    "scratch_checkpoint",
    "student_observe",
]
