"""Cross-modal teacher: autoencodes a future trajectory given the views along it and a narration."""

from __future__ import annotations

import logging
from typing import Optional, Sequence

import numpy as np
import torch
from torch import nn

from navdistill.checkpoint import Checkpoint, require_stage
from navdistill.config import ModelConfig, SimConfig, TrainRunConfig, model_config_hash
from navdistill.data import limit
from navdistill.encoders import StateFusion, TextEncoder, VisionEncoder, WaypointEncoder
from navdistill.errors import ContractError
from navdistill.losses import mse_traj
from navdistill.training import optimize, resolve_samples, seeded
from navdistill.transformer import Transformer, mlp

log = logging.getLogger(__name__)


class SequenceModel(nn.Module):
    """Token layout ``[reg, state_1..state_H, aux, ctx] + P`` fed to a bidirectional transformer."""

    def __init__(self, model: ModelConfig, sim: SimConfig, n_states: int):
        super().__init__()
        d = model.d_model
        self.model_cfg = model
        self.sim_cfg = sim
        self.n_states = n_states
        self.horizon = sim.horizon
        self.vision = VisionEncoder(d, model.conv_channels, sim.channels, (sim.image_height, sim.image_width))
        self.fusion = StateFusion(d)
        self.reg = nn.Parameter(torch.randn(d) * 0.02)
        self.ctx = nn.Parameter(torch.randn(d) * 0.02)
        self.pos = nn.Parameter(torch.randn(n_states + 3, d) * 0.02)
        self.transformer = Transformer(d, model.layers, model.heads, model.mlp_ratio)
        self.decoder = mlp(d, model.decoder_hidden, 2 * sim.horizon)

    @property
    def seq_len(self) -> int:
        return self.n_states + 3

    def assemble(self, states: torch.Tensor, aux: torch.Tensor) -> torch.Tensor:
        """(B, H, D) states and (B, D) aux token to the (B, L, D) input sequence."""
        if states.ndim != 3 or states.shape[1] == 0:
            raise ContractError("state tokens must be a non-empty (batch, H, D) stack")
        if states.shape[1] != self.n_states:
            raise ContractError(f"expected {self.n_states} state tokens, got {states.shape[1]}")
        b = states.shape[0]
        reg = self.reg.expand(b, 1, -1)
        ctx = self.ctx.expand(b, 1, -1)
        return torch.cat([reg, states, aux.unsqueeze(1), ctx], dim=1) + self.pos

    def run(self, seq: torch.Tensor, return_attention: bool = False):
        """Transformer pass; returns (trajectory (B, H_f, 2), ctx output (B, D)[, attention])."""
        out = self.transformer(seq, return_attention=return_attention)
        h, maps = out if return_attention else (out, None)
        ctx_out = h[:, -1]
        traj = self.decoder(ctx_out).reshape(-1, self.horizon, 2)
        return (traj, ctx_out, maps) if return_attention else (traj, ctx_out)


class TeacherModel(SequenceModel):
    def __init__(self, model: ModelConfig = ModelConfig(), sim: SimConfig = SimConfig()):
        super().__init__(model, sim, sim.horizon)
        self.waypoint = WaypointEncoder(model.d_model)
        self.text = TextEncoder(model.d_model, model.vocab_size)
        self.action_mask = nn.Parameter(torch.randn(model.d_model) * 0.02)

    def states(self, frames: torch.Tensor, waypoints: torch.Tensor, hide: Optional[torch.Tensor] = None) -> torch.Tensor:
        """(B, H, h, w, c) frames and (B, H, 2) waypoints to (B, H, D) fused state tokens.

        Rows flagged in ``hide`` get the learned mask token instead of their waypoint embeddings.
        """
        a = self.waypoint(waypoints)
        if hide is not None:
            a = torch.where(hide[:, None, None], self.action_mask.expand_as(a), a)
        return self.fusion(a, self.vision(frames))

    def forward(self, frames, waypoints, text_ids, return_attention: bool = False, hide=None):
        seq = self.assemble(self.states(frames, waypoints, hide), self.text(text_ids))
        return self.run(seq, return_attention)


def assemble_teacher_sequence(states, text, m: TeacherModel) -> torch.Tensor:
    """Build the (L, D) token sequence from H fused states and a text embedding."""
    if isinstance(states, (list, tuple)):
        if not states:
            raise ContractError("at least one state token is required")
        states = torch.stack(list(states))
    if states.ndim != 2:
        raise ContractError("states must be an (H, D) stack")
    return m.assemble(states.unsqueeze(0), text.unsqueeze(0))[0]


def teacher_forward(seq: torch.Tensor, m: TeacherModel):
    """Run one (L, D) sequence; returns (H_f x 2 trajectory, ctx output)."""
    if seq.shape != (m.seq_len, m.model_cfg.d_model):
        raise ContractError(f"sequence must be ({m.seq_len}, {m.model_cfg.d_model})")
    traj, ctx = m.run(seq.unsqueeze(0))
    return traj[0], ctx[0]


def checkpoint_meta(model: ModelConfig, sim: SimConfig, seed: int, step: int, metrics: dict, **extra) -> dict:
    return {
        "config_hash": model_config_hash(sim, model),
        "seed": seed,
        "step": step,
        "metrics": metrics,
        "model": model.model_dump(mode="json"),
        "sim": sim.model_dump(mode="json"),
        **extra,
    }


def teacher_from_checkpoint(ckpt: Checkpoint) -> TeacherModel:
    require_stage(ckpt, "teacher")
    m = TeacherModel(ModelConfig.model_validate(ckpt.meta["model"]), SimConfig.model_validate(ckpt.meta["sim"]))
    m.load_state_dict(ckpt.state_dict())
    return m.eval()


def teacher_loss(m: TeacherModel, batch: dict, hide=None) -> torch.Tensor:
    traj, _ = m(batch["teacher_frames"], batch["labels"], batch["text"], hide=hide)
    return mse_traj(traj, batch["labels"])


def evaluate_teacher(m: TeacherModel, samples, batch_size: int = 256) -> float:
    """Sample-weighted mean MSE."""
    total, n = 0.0, 0
    with torch.no_grad():
        for i in range(0, len(samples), batch_size):
            rows = np.arange(i, min(i + batch_size, len(samples)))
            total += float(teacher_loss(m, samples.batch(rows))) * len(rows)
            n += len(rows)
    return total / max(n, 1)


def train_teacher(
    data,
    cfg: TrainRunConfig = TrainRunConfig(),
    model: ModelConfig = ModelConfig(),
    sim: Optional[SimConfig] = None,
    val_data=None,
) -> Checkpoint:
    """Fit the teacher with trajectory MSE.

    ``data`` is a dataset manifest (train split is used, val split is scored
    after each epoch), a list of episodes, or a prepared ``SampleSet``.
    """
    sim = sim or getattr(data, "sim", None) or SimConfig()
    train = resolve_samples(data, "train", sim.history, sim.horizon, distill_only=True)
    train = limit(train, cfg.max_train_samples, cfg.seed)
    val = None
    if val_data is not None:
        val = resolve_samples(val_data, "val", sim.history, sim.horizon, distill_only=True)
    elif hasattr(data, "split") and data.split("val"):
        val = resolve_samples(data, "val", sim.history, sim.horizon, distill_only=True)

    with seeded(cfg.seed):
        m = TeacherModel(model, sim)
    m.train()

    def on_epoch(_):
        if val is None:
            return {}
        m.eval()
        out = {"val_loss": evaluate_teacher(m, val)}
        m.train()
        return out

    hide_rng = np.random.default_rng([cfg.seed, 3])

    def loss_fn(rows):
        hide = None
        if cfg.action_dropout > 0:
            hide = torch.from_numpy(hide_rng.random(len(rows)) < cfg.action_dropout)
        return teacher_loss(m, train.batch(rows), hide)

    hist = optimize(m.parameters(), loss_fn, len(train), cfg, on_epoch=on_epoch)
    m.eval()
    metrics = {
        "train_loss": evaluate_teacher(m, train),
        "val_loss": hist["epochs"][-1].get("val_loss"),
        "val_history": [e.get("val_loss") for e in hist["epochs"]],
        "train_history": [e["train_loss"] for e in hist["epochs"]],
    }
    log.info("teacher done: %s", {k: v for k, v in metrics.items() if not isinstance(v, list)})
    return Checkpoint.from_module("teacher", m, checkpoint_meta(model, sim, cfg.seed, hist["steps"], metrics))
