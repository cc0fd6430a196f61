"""Shared optimisation loop and data resolution for the training stages."""

from __future__ import annotations

import logging
import math
from contextlib import contextmanager
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
import torch

from navdistill.data import SampleSet, batches, build_samples
from navdistill.errors import ConfigError
from navdistill.simworld.dataset import DatasetManifest
from navdistill.simworld.types import Episode

log = logging.getLogger(__name__)


def resolve_samples(data, split: str, history: int, horizon: int, distill_only: bool = False) -> SampleSet:
    """Samples for ``split`` from a manifest, a list of episodes (any split) or a ready ``SampleSet``."""
    if isinstance(data, SampleSet):
        samples = data
        if distill_only:
            samples = samples.subset(np.nonzero(samples.has_teacher)[0])
    elif isinstance(data, DatasetManifest):
        episodes = data.load_split(split)
        if not episodes:
            raise ConfigError(f"dataset split {split!r} is empty")
        samples = build_samples(episodes, history, horizon, distill_only)
    elif isinstance(data, Sequence) and all(isinstance(e, Episode) for e in data):
        samples = build_samples(list(data), history, horizon, distill_only)
    else:
        raise ConfigError(f"cannot draw training samples from {type(data).__name__}")
    if len(samples) == 0:
        raise ConfigError(f"no usable samples in split {split!r}")
    return samples


def optimize(
    params: Iterable[torch.nn.Parameter],
    loss_fn: Callable[[np.ndarray], torch.Tensor],
    n: int,
    cfg,
    min_batch: int = 1,
    on_epoch: Optional[Callable[[int], dict]] = None,
) -> dict:
    """AdamW over shuffled mini-batches.

    Runs ``cfg.steps`` optimizer steps when set, otherwise ``cfg.epochs``
    passes, with the learning rate either constant or cosine-decayed to
    zero. Returns the per-step training losses and whatever ``on_epoch``
    reports after each pass.
    """
    params = [p for p in params if p.requires_grad]
    opt = torch.optim.AdamW(params, lr=cfg.learning_rate, weight_decay=cfg.weight_decay)
    rng = np.random.default_rng(cfg.seed)
    batch_size = min(cfg.batch_size, n)
    if batch_size < min_batch:
        raise ConfigError(f"need at least {min_batch} samples per batch, have {batch_size}")
    per_epoch = sum(1 for i in range(0, n, batch_size) if min(batch_size, n - i) >= min_batch)
    total = cfg.steps if cfg.steps is not None else cfg.epochs * per_epoch
    if getattr(cfg, "schedule", "constant") == "cosine":
        sched = torch.optim.lr_scheduler.LambdaLR(opt, lambda k: 0.5 * (1.0 + math.cos(math.pi * min(k, total) / total)))
    else:
        sched = None
    losses, epochs = [], []
    step, epoch = 0, 0
    target = cfg.steps
    while True:
        for rows in batches(n, batch_size, rng, min_batch):
            loss = loss_fn(rows)
            opt.zero_grad(set_to_none=True)
            loss.backward()
            if cfg.grad_clip:
                torch.nn.utils.clip_grad_norm_(params, cfg.grad_clip)
            opt.step()
            if sched is not None:
                sched.step()
            losses.append(float(loss.detach()))
            step += 1
            if target is not None and step >= target:
                break
        epoch += 1
        report = on_epoch(epoch) if on_epoch else {}
        report.update(epoch=epoch, step=step, train_loss=float(np.mean(losses[-max(1, n // batch_size):])))
        epochs.append(report)
        log.info("epoch %d step %d %s", epoch, step, {k: round(v, 5) for k, v in report.items() if isinstance(v, float)})
        if (target is not None and step >= target) or (target is None and epoch >= cfg.epochs):
            break
    return {"losses": losses, "epochs": epochs, "steps": step}


@contextmanager
def seeded(seed: int):
    """Seed torch's global generator for the block, restoring the previous state afterwards."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        yield
