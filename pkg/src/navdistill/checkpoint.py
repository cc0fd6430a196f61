"""Portable weight files.

Layout::

    b"N2NCKPT1"                magic
    uint64 little-endian       header length in bytes
    header                     canonical UTF-8 JSON: metadata plus a tensor table
    data                       little-endian float32 tensors, back to back

Each tensor-table entry is ``{"name", "shape", "offset"}`` with ``offset``
counted in bytes from the start of the data block. Writing the same
checkpoint twice yields the same bytes.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np
import torch

from navdistill.config import canonical_json
from navdistill.errors import ContractError, StageMismatchError

MAGIC = b"N2NCKPT1"
FORMAT_VERSION = 1
STAGES = ("scratch", "pretrained", "policy", "teacher")


@dataclass
class Checkpoint:
    stage: str
    tensors: dict[str, np.ndarray]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ContractError(f"unknown checkpoint stage {self.stage!r}")

    @classmethod
    def from_module(cls, stage: str, module: torch.nn.Module, meta: Mapping) -> "Checkpoint":
        tensors = {k: v.detach().cpu().to(torch.float32).numpy().copy() for k, v in module.state_dict().items()}
        return cls(stage, tensors, dict(meta))

    def state_dict(self, prefix: str = "") -> dict[str, torch.Tensor]:
        return {k[len(prefix):]: torch.from_numpy(v.copy()) for k, v in self.tensors.items() if k.startswith(prefix)}

    @property
    def config_hash(self) -> str:
        return self.meta.get("config_hash", "")

    # -- serialization ----------------------------------------------------

    def to_bytes(self) -> bytes:
        table, chunks, offset = [], [], 0
        for name in sorted(self.tensors):
            arr = np.ascontiguousarray(self.tensors[name], dtype="<f4")
            table.append({"name": name, "shape": list(arr.shape), "offset": offset})
            chunks.append(arr.tobytes())
            offset += arr.nbytes
        header = dict(self.meta)
        header.update(format_version=FORMAT_VERSION, stage=self.stage, tensors=table)
        raw = canonical_json(header).encode()
        return MAGIC + struct.pack("<Q", len(raw)) + raw + b"".join(chunks)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Checkpoint":
        if data[: len(MAGIC)] != MAGIC:
            raise ContractError("not a checkpoint file (bad magic)")
        (n,) = struct.unpack("<Q", data[len(MAGIC) : len(MAGIC) + 8])
        start = len(MAGIC) + 8
        header = json.loads(data[start : start + n])
        if header.get("format_version") != FORMAT_VERSION:
            raise ContractError(f"unsupported checkpoint format {header.get('format_version')}")
        body = memoryview(data)[start + n :]
        tensors = {}
        for entry in header.pop("tensors"):
            count = int(np.prod(entry["shape"], dtype=np.int64))
            arr = np.frombuffer(body, dtype="<f4", count=count, offset=entry["offset"])
            tensors[entry["name"]] = arr.astype(np.float32).reshape(entry["shape"])
        stage = header.pop("stage")
        header.pop("format_version")
        return cls(stage, tensors, header)

    def save(self, path: str | os.PathLike) -> str:
        data = self.to_bytes()
        path = Path(path)
        if path.parent != Path(""):
            path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)
        return hashlib.sha256(data).hexdigest()[:16]

    @property
    def id(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()[:16]


def require_stage(ckpt: Checkpoint, allowed: Iterable[str] | str) -> Checkpoint:
    allowed = (allowed,) if isinstance(allowed, str) else tuple(allowed)
    if ckpt.stage not in allowed:
        raise StageMismatchError(f"checkpoint stage is {ckpt.stage!r}; expected {' or '.join(allowed)}")
    return ckpt


def load_checkpoint(path: str | os.PathLike, stage: Iterable[str] | str | None = None) -> Checkpoint:
    try:
        data = Path(path).read_bytes()
    except FileNotFoundError:
        raise FileNotFoundError(f"checkpoint {path} does not exist") from None
    ckpt = Checkpoint.from_bytes(data)
    return require_stage(ckpt, stage) if stage is not None else ckpt
