"""On-disk dataset layout.

    <root>/manifest.json            episode list and split assignment
    <root>/<episode>/manifest.json  scenario, seed, step count, goal, config hash, frame layout
    <root>/<episode>/frames.bin     uint8 row-major (n, H, W, C) stack, value = round(255 * intensity)
    <root>/<episode>/labels.json    (n, H_f, 2) body-frame future waypoints
    <root>/<episode>/narrations.json
    <root>/<episode>/poses.json     robot poses, expert commands, pedestrian tracks, walls
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from navdistill.config import SimConfig, digest
from navdistill.errors import ConfigError, ContractError
from navdistill.simworld.scenarios import generate_episode
from navdistill.simworld.types import (
    SCENARIOS,
    Episode,
    Narration,
    PedestrianState,
    ScenarioKind,
    WorldState,
)

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
SPLITS = ("train", "val", "test")


class DatasetConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    out: str
    episode_count: int = Field(..., ge=1)
    seed: int = Field(0, ge=0)
    mix: dict[str, float] = Field(default_factory=lambda: {k.value: 0.2 for k in SCENARIOS})
    val_fraction: float = Field(0.15, ge=0, lt=1)
    test_fraction: float = Field(0.15, ge=0, lt=1)
    threads: int = Field(1, ge=1)
    sim: SimConfig = Field(default_factory=SimConfig)


def parse_mix(text: str) -> dict[str, float]:
    """Parse ``Kind=frac,Kind=frac``."""
    mix = {}
    for item in filter(None, (s.strip() for s in text.split(","))):
        if "=" not in item:
            raise ConfigError(f"bad mix entry {item!r}; expected Kind=fraction")
        k, v = item.split("=", 1)
        try:
            mix[k.strip()] = float(v)
        except ValueError:
            raise ConfigError(f"bad mix fraction {v!r}") from None
    return mix


def _validated_mix(mix: dict[str, float]) -> dict[ScenarioKind, float]:
    out = {}
    for name, frac in mix.items():
        try:
            kind = ScenarioKind.parse(name)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if frac < 0:
            raise ConfigError(f"negative mix fraction for {name}")
        out[kind] = out.get(kind, 0.0) + frac
    total = sum(out.values())
    if abs(total - 1.0) > 1e-9:
        raise ConfigError(f"scenario mix must sum to 1, got {total:.12g}")
    return out


def _scenario_counts(mix: dict[ScenarioKind, float], n: int) -> dict[ScenarioKind, int]:
    """Largest-remainder apportionment of ``n`` episodes, ties broken by scenario order."""
    kinds = [k for k in SCENARIOS if k in mix]
    exact = {k: mix[k] * n for k in kinds}
    counts = {k: int(np.floor(exact[k])) for k in kinds}
    short = n - sum(counts.values())
    order = sorted(kinds, key=lambda k: (-(exact[k] - counts[k]), SCENARIOS.index(k)))
    for k in order[:short]:
        counts[k] += 1
    return counts


def _split_sizes(m: int, val: float, test: float) -> tuple[int, int, int]:
    t, v = int(round(m * test)), int(round(m * val))
    while t + v >= m and (t or v):
        if v >= t and v:
            v -= 1
        else:
            t -= 1
    return m - t - v, v, t


# ---------------------------------------------------------------------------
# episode (de)serialization


def _frames_bytes(frames: np.ndarray) -> bytes:
    return np.ascontiguousarray(np.round(frames.astype(np.float64) * 255.0).astype(np.uint8)).tobytes()


def _dump(obj) -> bytes:
    return (json.dumps(obj, sort_keys=True, indent=1) + "\n").encode()


def episode_files(ep: Episode, config_hash: str) -> dict[str, bytes]:
    """Serialize an episode to its file contents (the exact bytes written to disk)."""
    frames = _frames_bytes(ep.frames)
    files = {
        "frames.bin": frames,
        "labels.json": _dump(ep.labels.tolist()),
        "narrations.json": _dump([n.text for n in ep.narrations]),
        "poses.json": _dump(
            {
                "robot": ep.poses.tolist(),
                "commands": ep.commands.tolist(),
                "time": [s.time for s in ep.states],
                "tail": ep.tail_poses.tolist(),
                "pedestrians": [[p.to_json() for p in s.pedestrians] for s in ep.states],
                "walls": [[list(a), list(b)] for a, b in ep.obstacles],
            }
        ),
    }
    n, h, w, c = ep.frames.shape
    manifest = {
        "format_version": FORMAT_VERSION,
        "scenario": ep.scenario.value,
        "seed": ep.seed,
        "step_count": n,
        "dt": ep.dt,
        "horizon": int(ep.labels.shape[1]),
        "goal": ep.goal.tolist(),
        "config_hash": config_hash,
        "frames": {"file": "frames.bin", "dtype": "uint8", "shape": [n, h, w, c], "order": "row-major", "scale": 255},
        "files": {k: hashlib.sha256(v).hexdigest() for k, v in sorted(files.items())},
    }
    files["manifest.json"] = _dump(manifest)
    return files


def write_episode(ep: Episode, directory: Path, config_hash: str) -> str:
    directory.mkdir(parents=True, exist_ok=True)
    files = episode_files(ep, config_hash)
    for name, data in files.items():
        (directory / name).write_bytes(data)
    return hashlib.sha256(files["manifest.json"]).hexdigest()


def read_episode(directory: Path) -> Episode:
    directory = Path(directory)
    meta = json.loads((directory / "manifest.json").read_text())
    n, h, w, c = meta["frames"]["shape"]
    raw = np.fromfile(directory / "frames.bin", dtype=np.uint8)
    if raw.size != n * h * w * c:
        raise ContractError(f"{directory}/frames.bin has {raw.size} bytes, expected {n * h * w * c}")
    frames = (raw.reshape(n, h, w, c).astype(np.float64) / 255.0).astype(np.float32)
    labels = np.array(json.loads((directory / "labels.json").read_text()), dtype=np.float64)
    narr = [Narration.from_text(t) for t in json.loads((directory / "narrations.json").read_text())]
    poses = json.loads((directory / "poses.json").read_text())
    walls = tuple((tuple(a), tuple(b)) for a, b in poses["walls"])
    states = [
        WorldState(
            tuple(pose),
            tuple(poses["commands"][k - 1]) if k else (0.0, 0.0),
            tuple(PedestrianState.from_json(p) for p in peds),
            walls,
            t,
        )
        for k, (pose, peds, t) in enumerate(zip(poses["robot"], poses["pedestrians"], poses["time"]))
    ]
    return Episode(
        scenario=ScenarioKind(meta["scenario"]),
        seed=meta["seed"],
        frames=frames,
        poses=np.array(poses["robot"], dtype=np.float64),
        commands=np.array(poses["commands"], dtype=np.float64),
        labels=labels,
        narrations=narr,
        goal=np.array(meta["goal"], dtype=np.float64),
        states=states,
        tail_poses=np.array(poses["tail"], dtype=np.float64).reshape(-1, 3),
        dt=meta["dt"],
    )


# ---------------------------------------------------------------------------
# dataset


class DatasetManifest:
    """A dataset on disk: top-level manifest plus lazily loaded episodes."""

    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)
        path = self.root / "manifest.json"
        try:
            self._bytes = path.read_bytes()
        except FileNotFoundError:
            raise FileNotFoundError(f"no dataset manifest at {path}") from None
        self.data = json.loads(self._bytes)
        self._cache: dict[str, Episode] = {}

    @property
    def dataset_hash(self) -> str:
        return digest(self._bytes)

    @property
    def config_hash(self) -> str:
        return self.data["config_hash"]

    @property
    def sim(self) -> SimConfig:
        return SimConfig.model_validate(self.data["sim"])

    @property
    def episodes(self) -> list[dict]:
        return self.data["episodes"]

    def split(self, name: str) -> list[dict]:
        if name not in self.data["splits"]:
            raise ConfigError(f"unknown split {name!r}")
        names = set(self.data["splits"][name])
        return [e for e in self.episodes if e["dir"] in names]

    def load(self, entry: dict) -> Episode:
        key = entry["dir"]
        if key not in self._cache:
            self._cache[key] = read_episode(self.root / key)
        return self._cache[key]

    def load_split(self, name: str) -> list[Episode]:
        return [self.load(e) for e in self.split(name)]


def make_dataset(cfg: DatasetConfig) -> DatasetManifest:
    mix = _validated_mix(cfg.mix)
    sim = cfg.sim
    sim.validate_episode()
    root = Path(cfg.out)
    try:
        root.mkdir(parents=True, exist_ok=True)
        probe = root / ".write-probe"
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as exc:
        raise OSError(f"output directory {root} is not writable: {exc}") from exc

    rng = np.random.default_rng(cfg.seed)
    n = cfg.episode_count
    counts = _scenario_counts(mix, n)
    kinds = [k for k in SCENARIOS for _ in range(counts.get(k, 0))]
    kinds = [kinds[i] for i in rng.permutation(n)]
    seeds = rng.choice(2**31 - 1, size=n, replace=False)

    # round-robin over scenarios so every kind reaches val/test before any kind repeats there
    rank = {}
    for kind in SCENARIOS:
        for j, i in enumerate(i for i in range(n) if kinds[i] is kind):
            rank[i] = (j, SCENARIOS.index(kind))
    order = sorted(range(n), key=lambda i: rank[i], reverse=True)
    n_train, n_val, _ = _split_sizes(n, cfg.val_fraction, cfg.test_fraction)
    n_test = n - n_train - n_val
    split_of = {i: "train" for i in range(n)}
    quota = {"test": n_test, "val": n_val}
    for i in order:
        if not any(quota.values()):
            break
        name = "test" if quota["test"] >= quota["val"] else "val"
        split_of[i] = name
        quota[name] -= 1

    config_hash = digest(sim.model_dump(mode="json"))

    def build(i: int) -> dict:
        ep = generate_episode(kinds[i], int(seeds[i]), sim)
        name = f"ep_{i:05d}"
        content = write_episode(ep, root / name, config_hash)
        return {"dir": name, "scenario": kinds[i].value, "seed": int(seeds[i]), "steps": len(ep),
                "split": split_of[i], "sha256": content}

    if cfg.threads > 1:
        with ThreadPoolExecutor(cfg.threads) as pool:
            entries = list(pool.map(build, range(n)))
    else:
        entries = [build(i) for i in range(n)]
    log.info("wrote %d episodes to %s", n, root)

    manifest = {
        "format_version": FORMAT_VERSION,
        "config_hash": config_hash,
        "seed": cfg.seed,
        "mix": {k.value: v for k, v in mix.items()},
        "sim": sim.model_dump(mode="json"),
        "episodes": entries,
        "splits": {s: [e["dir"] for e in entries if e["split"] == s] for s in SPLITS},
    }
    (root / "manifest.json").write_bytes(_dump(manifest))
    return DatasetManifest(root)


def dataset_fingerprint(root: str | os.PathLike) -> str:
    """Digest of every file under ``root`` (used to prove nothing was mutated)."""
    h = hashlib.sha256()
    for path in sorted(Path(root).rglob("*")):
        if path.is_file():
            h.update(str(path.relative_to(root)).encode())
            h.update(path.read_bytes())
    return h.hexdigest()

