"""Training samples cut from episodes.

Anchor step ``t`` of an episode yields:

* student input: frames ``t-H_p+1 .. t`` (clamped at frame 0) and the goal seen from pose ``t``;
* teacher input: frames ``t+1 .. t+H_f`` (the views at each future waypoint), those waypoints and narration ``t``;
* target: the ``H_f`` body-frame waypoints ``labels[t]``.

Teacher inputs exist only for anchors whose future frames were rendered.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch

from navdistill.encoders import PAD
from navdistill.errors import ConfigError
from navdistill.simworld.types import Episode
from navdistill.simworld.vocab import encode_tokens

_LUT = (np.arange(256, dtype=np.float64) / 255.0).astype(np.float32)


@dataclass
class SampleSet:
    frames: np.ndarray  # (F, H, W, C) uint8, every frame of every episode
    student_idx: np.ndarray  # (N, H_p) rows of ``frames``
    teacher_idx: np.ndarray  # (N, H_f) rows of ``frames``, -1 where not rendered
    labels: np.ndarray  # (N, H_f, 2) float64
    goals: np.ndarray  # (N, 2) float64
    text: np.ndarray  # (N, T) int64, PAD filled
    scenario: np.ndarray  # (N,) scenario names
    episode: np.ndarray  # (N,)
    step: np.ndarray  # (N,)

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def has_teacher(self) -> np.ndarray:
        return (self.teacher_idx >= 0).all(axis=1)

    def subset(self, rows) -> "SampleSet":
        rows = np.asarray(rows)
        return SampleSet(
            self.frames, self.student_idx[rows], self.teacher_idx[rows], self.labels[rows], self.goals[rows],
            self.text[rows], self.scenario[rows], self.episode[rows], self.step[rows],
        )

    def images(self, idx: np.ndarray) -> torch.Tensor:
        return torch.from_numpy(_LUT[self.frames[idx]])

    def batch(self, rows, no_text: bool = False) -> dict[str, torch.Tensor]:
        rows = np.asarray(rows)
        out = {
            "student_frames": self.images(self.student_idx[rows]),
            "labels": torch.from_numpy(self.labels[rows].astype(np.float32)),
            "goals": torch.from_numpy(self.goals[rows].astype(np.float32)),
        }
        t_idx = self.teacher_idx[rows]
        if (t_idx >= 0).all():
            out["teacher_frames"] = self.images(t_idx)
            text = self.text[rows]
            out["text"] = torch.from_numpy(np.full_like(text, PAD) if no_text else text)
        return out


def build_samples(episodes: Sequence[Episode], history: int = 5, horizon: int = 5, distill_only: bool = False) -> SampleSet:
    """Cut every anchor of every episode; ``distill_only`` keeps anchors that have teacher inputs."""
    if not episodes:
        raise ConfigError("no episodes to draw samples from")
    frames, s_idx, t_idx, labels, goals, texts, scen, epi, steps = [], [], [], [], [], [], [], [], []
    base = 0
    for e, ep in enumerate(episodes):
        n = len(ep)
        if ep.labels.shape[1] != horizon:
            raise ConfigError(f"episode horizon {ep.labels.shape[1]} does not match model horizon {horizon}")
        frames.append(np.round(ep.frames.astype(np.float64) * 255.0).astype(np.uint8))
        for t in range(n):
            has_future = t + horizon <= n - 1
            if distill_only and not has_future:
                continue
            s_idx.append([base + max(0, k) for k in range(t - history + 1, t + 1)])
            t_idx.append([base + k for k in range(t + 1, t + horizon + 1)] if has_future else [-1] * horizon)
            labels.append(ep.labels[t])
            goals.append(ep.goal_in_body_frame(t))
            texts.append(encode_tokens(ep.narrations[t].tokens))
            scen.append(ep.scenario.value)
            epi.append(e)
            steps.append(t)
        base += n
    width = max(max((len(t) for t in texts), default=1), 1)
    text = np.full((len(texts), width), PAD, dtype=np.int64)
    for i, t in enumerate(texts):
        text[i, : len(t)] = t
    return SampleSet(
        frames=np.concatenate(frames),
        student_idx=np.array(s_idx, dtype=np.int64).reshape(-1, history),
        teacher_idx=np.array(t_idx, dtype=np.int64).reshape(-1, horizon),
        labels=np.array(labels, dtype=np.float64).reshape(-1, horizon, 2),
        goals=np.array(goals, dtype=np.float64).reshape(-1, 2),
        text=text,
        scenario=np.array(scen),
        episode=np.array(epi, dtype=np.int64),
        step=np.array(steps, dtype=np.int64),
    )


def limit(samples: SampleSet, max_samples: int | None, seed: int) -> SampleSet:
    """A seeded subset of at most ``max_samples`` rows, in original order."""
    if max_samples is None or max_samples >= len(samples):
        return samples
    rows = np.sort(np.random.default_rng(seed).choice(len(samples), size=max_samples, replace=False))
    return samples.subset(rows)


def batches(n: int, batch_size: int, rng: np.random.Generator, min_size: int = 1):
    """One shuffled epoch of row indices; a trailing batch smaller than ``min_size`` is dropped."""
    order = rng.permutation(n)
    for i in range(0, n, batch_size):
        rows = order[i : i + batch_size]
        if len(rows) >= min_size:
            yield rows
