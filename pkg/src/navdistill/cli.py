"""``navdistill`` command-line entry point.

Exit codes:
  0  success
  1  usage or configuration error
  2  missing file or other I/O failure
  3  contract violation (checkpoint stage or config-hash mismatch, bad shapes)
  4  degenerate batch (zero-variance embedding dimension during pretraining)
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch

from navdistill import __version__
from navdistill.checkpoint import Checkpoint, load_checkpoint
from navdistill.config import PRESETS, Config, model_config_hash
from navdistill.errors import (
    EXIT_CONTRACT,
    EXIT_IO,
    EXIT_USAGE,
    ConfigError,
    ConfigHashMismatchError,
    NavDistillError,
)

log = logging.getLogger("navdistill")

EXIT_HELP = """exit codes:
  0  success
  1  usage or configuration error
  2  missing file or I/O failure
  3  contract violation (stage or config-hash mismatch)
  4  degenerate batch during pretraining"""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


# -- helpers -------------------------------------------------------------------


def _deep_merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        out[k] = _deep_merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


def resolve_config(preset: str = "default", path: Optional[str] = None, seed: Optional[int] = None) -> Config:
    """Preset defaults, overlaid with a JSON file, then ``--seed``, then ``N2N_SEED``."""
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    data = PRESETS[preset]().model_dump(mode="json", by_alias=True)
    if path:
        p = Path(path)
        if not p.exists():
            raise FileNotFoundError(f"config file {path} does not exist")
        try:
            raw = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"config {path} must hold a JSON object")
        data = _deep_merge(data, raw)
    cfg = Config.from_dict(data)
    if seed is not None:
        cfg = cfg.with_seed(seed)
    env = os.environ.get("N2N_SEED")
    if env is not None:
        try:
            cfg = cfg.with_seed(int(env))
        except ValueError:
            raise ConfigError(f"N2N_SEED must be an integer, got {env!r}") from None
    return cfg


def _config(args) -> Config:
    return resolve_config(args.preset, getattr(args, "config", None), getattr(args, "seed", None))


def _dataset(path: str):
    from navdistill.simworld.dataset import DatasetManifest

    return DatasetManifest(path)


def _check_hash(ckpt: Checkpoint, expected: str, what: str, force: bool) -> None:
    if ckpt.config_hash != expected:
        msg = f"{what} config hash {ckpt.config_hash} does not match {expected}"
        if not force:
            raise ConfigHashMismatchError(msg + " (use --force to override)")
        log.warning("%s; continuing because of --force", msg)


def _check_dataset(data, cfg: Config, args) -> None:
    """The configured sim section must describe the dataset being used."""
    from navdistill.config import digest

    if getattr(args, "config", None) is None:
        return
    if digest(cfg.sim.model_dump(mode="json")) != data.config_hash:
        msg = f"config sim section differs from the dataset's (hash {data.config_hash})"
        if not args.force:
            raise ConfigHashMismatchError(msg + " (use --force to override)")
        log.warning("%s; continuing because of --force", msg)


def _save(ckpt: Checkpoint, out: str) -> None:
    cid = ckpt.save(out)
    print(f"wrote {ckpt.stage} checkpoint {out} ({cid})")


# -- commands ------------------------------------------------------------------


def cmd_gen_data(args) -> int:
    from navdistill.simworld.dataset import DatasetConfig, make_dataset, parse_mix

    cfg = _config(args)
    dc = {"out": args.out, "episode_count": args.episodes, "seed": args.seed if args.seed is not None else cfg.seed,
          "threads": args.threads, "sim": cfg.sim}
    if args.mix:
        dc["mix"] = parse_mix(args.mix)
    try:
        dcfg = DatasetConfig(**dc)
    except Exception as exc:  # pydantic validation
        raise ConfigError(str(exc).splitlines()[0]) from exc
    m = make_dataset(dcfg)
    counts = {s: len(m.split(s)) for s in ("train", "val", "test")}
    print(f"wrote {len(m.episodes)} episodes to {args.out} (train/val/test {counts['train']}/{counts['val']}/{counts['test']}, "
          f"hash {m.dataset_hash})")
    return 0


def cmd_train_teacher(args) -> int:
    from navdistill.teacher import train_teacher

    cfg = _config(args)
    data = _dataset(args.data)
    _check_dataset(data, cfg, args)
    ckpt = train_teacher(data, cfg.teacher, cfg.model, data.sim)
    m = ckpt.meta["metrics"]
    print(f"teacher train MSE {m['train_loss']:.6f} val MSE {m['val_loss'] if m['val_loss'] is None else round(m['val_loss'], 6)}")
    _save(ckpt, args.out)
    return 0


def cmd_pretrain_student(args) -> int:
    from navdistill.student import pretrain_student

    cfg = _config(args)
    data = _dataset(args.data)
    _check_dataset(data, cfg, args)
    teacher = load_checkpoint(args.teacher, "teacher")
    _check_hash(teacher, model_config_hash(data.sim, cfg.model), "teacher checkpoint", args.force)
    pc = cfg.pretrain.model_copy(update={"no_text": args.no_text or cfg.pretrain.no_text})
    ckpt = pretrain_student(data, teacher, pc)
    m = ckpt.meta["metrics"]
    print(f"Barlow Twins loss first {m['first_loss']:.4f} final {m['final_loss']:.4f}")
    _save(ckpt, args.out)
    return 0


def cmd_finetune_student(args) -> int:
    from navdistill.student import finetune_student, scratch_checkpoint

    cfg = _config(args)
    data = _dataset(args.data)
    _check_dataset(data, cfg, args)
    if args.ckpt:
        init = load_checkpoint(args.ckpt, ("pretrained", "scratch"))
        _check_hash(init, model_config_hash(data.sim, cfg.model), "student checkpoint", args.force)
    elif args.scratch:
        init = scratch_checkpoint(cfg.model, data.sim, cfg.finetune.seed)
    else:
        raise ConfigError("give --ckpt or --scratch")
    ckpt = finetune_student(data, init, cfg.finetune)
    m = ckpt.meta["metrics"]
    print(f"train ADE {m['train_ade']:.4f} val ADE {m['val_ade'] if m['val_ade'] is None else round(m['val_ade'], 4)}")
    _save(ckpt, args.out)
    return 0


def cmd_eval_offline(args) -> int:
    from navdistill.evaluation import compare_methods, eval_offline

    data = _dataset(args.data)
    names = args.method or []
    reports = []
    for i, path in enumerate(args.ckpt):
        ckpt = load_checkpoint(path, "policy")
        _check_hash(ckpt, model_config_hash(data.sim, _model_cfg(ckpt)), f"checkpoint {path}", args.force)
        method = names[i] if i < len(names) else Path(path).stem
        reports.append(eval_offline(ckpt, data, args.split, method=method))
    if len(reports) >= 2:
        table = compare_methods(reports)
        text = table.to_csv()
        provenance = {"reports": [r.provenance for r in reports], "ours": table.ours,
                      "best_other": table.best_other, "improvement_pct": table.improvement_pct}
    else:
        text, provenance = reports[0].to_csv(), reports[0].provenance
    sys.stdout.write(text)
    if args.report:
        out = Path(args.report)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)
        out.with_suffix(".json").write_text(json.dumps(provenance, sort_keys=True, indent=1) + "\n")
    return 0


def _model_cfg(ckpt: Checkpoint):
    from navdistill.config import ModelConfig

    return ModelConfig.model_validate(ckpt.meta["model"])


def cmd_eval_closedloop(args) -> int:
    from navdistill.controller import rollout_closed_loop, straight_line_policy, zero_velocity_policy
    from navdistill.simworld.types import ScenarioKind
    from navdistill.student import StudentPolicy

    cfg = _config(args)
    try:
        kind = ScenarioKind.parse(args.scenario or cfg.eval.scenario)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    trials = args.trials or cfg.eval.trials
    if args.scripted:
        policy = {"zero": zero_velocity_policy, "straight": straight_line_policy}[args.scripted]
        sim = cfg.sim
    elif args.ckpt:
        ckpt = load_checkpoint(args.ckpt, "policy")
        policy = StudentPolicy(ckpt)
        sim = policy.model.sim_cfg
    else:
        raise ConfigError("give --ckpt or --scripted")
    base = args.seed if args.seed is not None else cfg.seed
    rows = []
    for trial in range(trials):
        r = rollout_closed_loop(policy, kind, base + trial, cfg.controller, sim)
        rows.append({"trial": trial, **r.row()})
    successes = sum(r["success"] for r in rows)
    collided = sum(r["collisions"] > 0 for r in rows)
    summary = {"scenario": kind.value, "trial": "summary", "seed": "", "success": f"{successes}/{trials}",
               "collisions": f"{collided}/{trials}", "steps": "",
               "final_goal_distance": round(float(np.mean([r["final_goal_distance"] for r in rows])), 6)}
    cols = ["scenario", "trial", "seed", "success", "collisions", "steps", "final_goal_distance"]
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.DictWriter(out, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for r in rows + [summary]:
            w.writerow({k: r[k] for k in cols})
    finally:
        if out is not sys.stdout:
            out.close()
    if args.out:
        print(f"{kind.value}: success {successes}/{trials}, collisions {collided}/{trials}")
    return 0


def cmd_export_activations(args) -> int:
    from navdistill.evaluation import export_activations, write_pgm

    data = _dataset(args.data)
    entries = data.episodes
    match = [e for e in entries if e["dir"] == args.episode]
    if not match:
        try:
            match = [entries[int(args.episode)]]
        except (ValueError, IndexError):
            raise ConfigError(f"no episode {args.episode!r} in {args.data}") from None
    episode = data.load(match[0])
    ckpt = load_checkpoint(args.ckpt)
    maps = export_activations(ckpt, episode, args.step)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    spatial = [m for m in maps if m.source == "conv-channel-mean"]
    for m in spatial:
        write_pgm(out / f"frame_{m.frame}.pgm", m.grid)
    attn = [m for m in maps if m.source == "ctx-attention"][0]
    sidecar = {"episode": match[0]["dir"], "step": args.step, "stage": ckpt.stage, "checkpoint_id": ckpt.id,
               "ctx_attention": [round(float(v), 8) for v in attn.grid], "frames": [f"frame_{m.frame}.pgm" for m in spatial]}
    (out / "attention.json").write_text(json.dumps(sidecar, indent=1) + "\n")
    print(f"wrote {len(spatial)} maps and attention.json to {out}")
    return 0


def cmd_ablate(args) -> int:
    from navdistill.evaluation import run_ablation_suite

    cfg = _config(args)
    data = _dataset(args.data)
    try:
        seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"--seeds must be comma-separated integers, got {args.seeds!r}") from None
    result = run_ablation_suite(data, seeds, cfg, split=args.split)
    text = result.to_csv()
    sys.stdout.write(text)
    if args.out:
        Path(args.out).write_text(text)
    return 0


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--preset", default="default", help=f"base settings: {', '.join(sorted(PRESETS))}")
    common.add_argument("--config", help="JSON file overriding preset values")
    common.add_argument("--threads", type=int, default=1, help="torch / data-generation threads")
    common.add_argument("--force", action="store_true", help="proceed despite config-hash mismatches")
    common.add_argument("--log-level", default="WARNING")

    p = _Parser(prog="navdistill", description="Narration-distilled navigation policies on a synthetic world.",
                epilog=EXIT_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, fn, help_):
        sp = sub.add_parser(name, parents=[common], help=help_, description=help_, epilog=EXIT_HELP,
                            formatter_class=argparse.RawDescriptionHelpFormatter)
        sp.set_defaults(fn=fn)
        return sp

    sp = add("gen-data", cmd_gen_data, "generate a synthetic episode dataset")
    sp.add_argument("--out", required=True)
    sp.add_argument("--episodes", type=int, required=True)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--mix", help="scenario fractions, e.g. Crowd=0.5,FrontalApproach=0.5")

    sp = add("train-teacher", cmd_train_teacher, "train the cross-modal teacher")
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int)

    sp = add("pretrain-student", cmd_pretrain_student, "align the student to a frozen teacher")
    sp.add_argument("--data", required=True)
    sp.add_argument("--teacher", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--no-text", action="store_true", help="feed the teacher empty narrations")
    sp.add_argument("--seed", type=int)

    sp = add("finetune-student", cmd_finetune_student, "fine-tune a student on trajectories")
    sp.add_argument("--data", required=True)
    sp.add_argument("--ckpt", help="pretrained or scratch checkpoint")
    sp.add_argument("--scratch", action="store_true", help="start from random weights instead of --ckpt")
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int)

    sp = add("eval-offline", cmd_eval_offline, "score policies against held-out trajectories")
    sp.add_argument("--data", required=True)
    sp.add_argument("--ckpt", action="append", required=True, help="policy checkpoint (repeatable; first is ours)")
    sp.add_argument("--method", action="append", help="display name per --ckpt")
    sp.add_argument("--split", default="test")
    sp.add_argument("--report", help="CSV output path; provenance goes next to it as .json")

    sp = add("eval-closedloop", cmd_eval_closedloop, "run seeded closed-loop trials")
    sp.add_argument("--ckpt")
    sp.add_argument("--scripted", choices=["zero", "straight"], help="use a scripted policy instead of a checkpoint")
    sp.add_argument("--trials", type=int)
    sp.add_argument("--scenario")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", help="per-trial CSV path (default stdout)")

    sp = add("export-activations", cmd_export_activations, "dump encoder maps and ctx attention")
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--episode", default="0", help="episode directory name or index")
    sp.add_argument("--step", type=int, default=0)
    sp.add_argument("--out", required=True)

    sp = add("ablate", cmd_ablate, "full vs no-text vs no-pretraining over several seeds")
    sp.add_argument("--data", required=True)
    sp.add_argument("--seeds", default="0,1,2")
    sp.add_argument("--split", default="test")
    sp.add_argument("--out")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        parser = build_parser()
        args = parser.parse_args(argv)
        logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                            format="%(levelname)s %(name)s: %(message)s")
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        torch.set_num_threads(args.threads)
        return args.fn(args)
    except NavDistillError as exc:
        print(f"error: {exc}".splitlines()[0], file=sys.stderr)
        return exc.exit_code
    except (FileNotFoundError, PermissionError, IsADirectoryError, NotADirectoryError, OSError) as exc:
        print(f"error: {exc}".splitlines()[0], file=sys.stderr)
        return EXIT_IO
    except KeyboardInterrupt:
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
