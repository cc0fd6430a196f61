"""Offline metrics, method comparison, ablations and activation export."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np
import torch

from navdistill.checkpoint import Checkpoint, require_stage
from navdistill.config import Config, canonical_json
from navdistill.data import SampleSet, build_samples
from navdistill.errors import ConfigError, ContractError
from navdistill.metrics import ade, aoe, fde
from navdistill.simworld.dataset import DatasetManifest
from navdistill.simworld.types import SCENARIOS, Episode
from navdistill.student import (
    finetune_student,
    predict,
    pretrain_student,
    scratch_checkpoint,
    student_from_checkpoint,
)
from navdistill.teacher import teacher_from_checkpoint, train_teacher
from navdistill.training import resolve_samples

log = logging.getLogger(__name__)

METRIC_COLUMNS = ("scenario", "method", "aoe", "ade", "fde", "n")
# text-module ablation, All columns (AOE rad, ADE m, FDE m)
REFERENCE_ABLATION = {
    "no_text": {"aoe": 0.06, "ade": 0.19, "fde": 0.24},
    "full": {"aoe": 0.04, "ade": 0.16, "fde": 0.24},
}


def _fmt(v) -> str:
    return f"{v:.6f}" if isinstance(v, float) else str(v)


def _csv(rows: Sequence[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({k: _fmt(r.get(k, "")) for k in columns})
    return buf.getvalue()


@dataclass
class MetricsReport:
    rows: list[dict]
    provenance: dict
    per_sample: dict = field(default_factory=dict, repr=False)

    @property
    def method(self) -> str:
        return self.rows[0]["method"]

    def row(self, scenario: str = "All") -> dict:
        for r in self.rows:
            if r["scenario"] == scenario:
                return r
        raise KeyError(scenario)

    def to_csv(self) -> str:
        return _csv(self.rows, METRIC_COLUMNS)

    def write(self, path: str | os.PathLike) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_csv())
        path.with_suffix(".json").write_text(canonical_json(self.provenance) + "\n")


def metric_rows(pred: np.ndarray, labels: np.ndarray, scenarios: np.ndarray, method: str) -> tuple[list[dict], dict]:
    """Per-scenario rows plus an "All" row pooled over every sample."""
    per = {"aoe": aoe(pred, labels), "ade": ade(pred, labels), "fde": fde(pred, labels)}
    per = {k: np.atleast_1d(v) for k, v in per.items()}
    rows = []
    for kind in SCENARIOS:
        sel = scenarios == kind.value
        if sel.any():
            rows.append({"scenario": kind.value, "method": method, **{k: float(v[sel].mean()) for k, v in per.items()},
                         "n": int(sel.sum())})
    rows.append({"scenario": "All", "method": method, **{k: float(v.mean()) for k, v in per.items()}, "n": len(labels)})
    return rows, per


Predictor = Callable[[SampleSet], np.ndarray]


def eval_offline(
    ckpt: Union[Checkpoint, Predictor],
    data: Union[DatasetManifest, Sequence[Episode], SampleSet],
    split: str = "test",
    method: Optional[str] = None,
    goal_masked: bool = False,
    seed: Optional[int] = None,
) -> MetricsReport:
    """Score every anchor of every episode in ``split`` with the goal provided (or withheld)."""
    if isinstance(ckpt, Checkpoint):
        require_stage(ckpt, "policy")
        model = student_from_checkpoint(ckpt, ("policy",)).eval()
        history, horizon = model.n_states, model.horizon
        fn: Predictor = lambda s: predict(model, s, goal_masked)
        ckpt_id, seed = ckpt.id, ckpt.meta.get("seed", seed) if seed is None else seed
        config_hash = ckpt.config_hash
    else:
        fn = ckpt
        sim = getattr(data, "sim", None)
        history, horizon = (sim.history, sim.horizon) if sim else (5, 5)
        ckpt_id, config_hash = getattr(ckpt, "__name__", "callable"), ""
    if isinstance(data, DatasetManifest) and not data.split(split):
        raise ConfigError(f"split {split!r} has no episodes")
    samples = resolve_samples(data, split, history, horizon)
    pred = np.asarray(fn(samples), dtype=np.float64)
    method = method or ckpt_id
    rows, per = metric_rows(pred, samples.labels, samples.scenario, method)
    provenance = {
        "dataset_hash": data.dataset_hash if isinstance(data, DatasetManifest) else "",
        "checkpoint_id": ckpt_id,
        "config_hash": config_hash,
        "seed": seed,
        "split": split,
        "goal": "masked" if goal_masked else "provided",
        "method": method,
    }
    return MetricsReport(rows, provenance, per)


@dataclass
class ComparisonTable:
    rows: list[dict]
    ours: str
    best_other: str
    improvement: float

    @property
    def improvement_pct(self) -> float:
        return round(100.0 * self.improvement, 2)

    def to_csv(self) -> str:
        return _csv(self.rows, METRIC_COLUMNS + ("improvement_pct",))


def improvement(ours: float, best_other: float) -> float:
    """Relative error reduction of ``ours`` against ``best_other``."""
    if best_other <= 0:
        raise ContractError("baseline error must be positive to express a relative improvement")
    return (best_other - ours) / best_other


def compare_methods(reports: Sequence[MetricsReport], ours: Optional[str] = None) -> ComparisonTable:
    """Stack reports; the designated method (first report by default) is scored against the best other on All ADE."""
    if len(reports) < 2:
        raise ContractError("comparison needs at least two reports")
    hashes = {r.provenance.get("dataset_hash", "") for r in reports}
    if len(hashes) != 1:
        raise ContractError(f"reports come from different datasets: {sorted(hashes)}")
    idx = 0 if ours is None else next((i for i, r in enumerate(reports) if r.method == ours), None)
    if idx is None:
        raise ContractError(f"no report for method {ours!r}")
    mine = reports[idx]
    others = [r for i, r in enumerate(reports) if i != idx]
    best = min(others, key=lambda r: r.row("All")["ade"])
    gain = improvement(mine.row("All")["ade"], best.row("All")["ade"])
    rows = []
    for i, r in enumerate(reports):
        for row in r.rows:
            extra = {"improvement_pct": round(100.0 * gain, 2)} if i == idx and row["scenario"] == "All" else {}
            rows.append({**row, **extra})
    return ComparisonTable(rows, mine.method, best.method, gain)


# -- activation export -------------------------------------------------------


@dataclass
class ActivationMap:
    grid: np.ndarray
    source: str  # "conv-channel-mean" or "ctx-attention"
    frame: Optional[int] = None


def normalize_map(x: np.ndarray) -> np.ndarray:
    """Min-max scale to [0, 1]; a constant map becomes all zeros."""
    x = np.asarray(x, dtype=np.float64)
    lo, hi = x.min(), x.max()
    if not hi > lo:
        return np.zeros_like(x)
    return np.clip((x - lo) / (hi - lo), 0.0, 1.0)


def export_activations(ckpt: Checkpoint, episode: Episode, step: int) -> list[ActivationMap]:
    """Encoder feature maps for each input frame plus the final-layer ctx attention over state tokens."""
    if not 0 <= step < len(episode):
        raise ContractError(f"step {step} outside episode of length {len(episode)}")
    if ckpt.stage == "teacher":
        m = teacher_from_checkpoint(ckpt)
        h = m.horizon
        if step + h > len(episode) - 1:
            raise ContractError("teacher window needs rendered frames after the step")
        samples = build_samples([episode], m.sim_cfg.history, h, distill_only=True)
        row = int(np.nonzero(samples.step == step)[0][0])
        b = samples.batch([row])
        frames = b["teacher_frames"]
        with torch.no_grad():
            fmap = m.vision.features(frames)[0]
            _, _, maps = m(frames, b["labels"], b["text"], return_attention=True)
    else:
        m = student_from_checkpoint(ckpt).eval()
        samples = build_samples([episode], m.n_states, m.horizon)
        b = samples.batch([step])
        frames = b["student_frames"]
        with torch.no_grad():
            fmap = m.vision.features(frames)[0]
            _, _, maps = m(frames, b["goals"], torch.zeros(1, dtype=torch.bool), return_attention=True)
    out = [ActivationMap(normalize_map(f.mean(dim=0).double().numpy()), "conv-channel-mean", i) for i, f in enumerate(fmap)]
    attn = maps[-1][0, -1, 1 : 1 + m.n_states].double().numpy()
    out.append(ActivationMap(attn, "ctx-attention"))
    return out


def write_pgm(path: str | os.PathLike, grid: np.ndarray) -> None:
    """Binary portable graymap, 8-bit."""
    g = np.round(np.clip(np.asarray(grid, dtype=np.float64), 0, 1) * 255).astype(np.uint8)
    h, w = g.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode() + g.tobytes())


# -- ablation suite ------------------------------------------------------------

ABLATION_METHODS = ("full", "no_text", "no_pretrain")


@dataclass
class AblationResult:
    rows: list[dict]  # one per (seed, method)
    means: list[dict]
    reference: list[dict]
    reports: dict = field(default_factory=dict, repr=False)  # (seed, method) -> MetricsReport
    checkpoints: dict = field(default_factory=dict, repr=False)  # (seed, method) -> policy Checkpoint

    def mean(self, method: str, metric: str = "ade") -> float:
        return next(r[metric] for r in self.means if r["method"] == method)

    def to_csv(self) -> str:
        cols = ("kind", "seed", "method", "aoe", "ade", "fde", "n")
        rows = ([{"kind": "seed", **r} for r in self.rows] + [{"kind": "mean", **r} for r in self.means]
                + [{"kind": "reference", **r} for r in self.reference])
        return _csv(rows, cols)


def run_ablation_suite(
    data: DatasetManifest,
    seeds: Sequence[int],
    cfg: Optional[Config] = None,
    split: str = "test",
    on_result: Optional[Callable[[int, str, MetricsReport], None]] = None,
) -> AblationResult:
    """Train and score full, no-text and no-pretraining students per seed under one config."""
    if not seeds:
        raise ConfigError("at least one seed is required")
    base = cfg or Config()
    rows, reports, ckpts = [], {}, {}
    for seed in seeds:
        c = base.with_seed(seed)
        teacher = train_teacher(data, c.teacher, c.model)
        for method in ABLATION_METHODS:
            if method == "no_pretrain":
                init = scratch_checkpoint(c.model, data.sim, seed)
            else:
                init = pretrain_student(data, teacher, c.pretrain.model_copy(update={"no_text": method == "no_text"}))
            policy = finetune_student(data, init, c.finetune)
            rep = eval_offline(policy, data, split, method=method, seed=seed)
            reports[(seed, method)], ckpts[(seed, method)] = rep, policy
            rows.append({"seed": seed, **rep.row("All")})
            if on_result:
                on_result(seed, method, rep)
            log.info("seed %d %s: All ADE %.4f", seed, method, rep.row("All")["ade"])
    means = []
    for method in ABLATION_METHODS:
        sel = [r for r in rows if r["method"] == method]
        means.append({"seed": "mean", "method": method, "n": sum(r["n"] for r in sel),
                      **{k: float(np.mean([r[k] for r in sel])) for k in ("aoe", "ade", "fde")}})
    reference = [{"seed": "", "method": f"reference_{k}", "n": "", **v} for k, v in REFERENCE_ABLATION.items()]
    return AblationResult(rows, means, reference, reports, ckpts)
