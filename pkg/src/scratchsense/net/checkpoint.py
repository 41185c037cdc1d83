"""Binary model checkpoints and loss-history CSV.

Layout (little-endian):
    b"SNCK"  u16 version  u32 header_len  header (UTF-8 JSON, sorted keys)
    parameter blobs as <f8 in header order
    Adam first/second moments in the same order (if header says so)
    u32 CRC32 of every preceding byte
"""
from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import ModelConfig, ScratchNet, parameter_shapes
from .train import AdamState, TrainState

MAGIC = b"SNCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    model: ScratchNet
    adam: AdamState | None = None
    iteration: int = 0
    meta: dict = field(default_factory=dict)


def _blob(arrays) -> bytes:
    return b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays)


def encode(ckpt: Checkpoint) -> bytes:
    cfg = ckpt.model.cfg
    names = list(parameter_shapes(cfg))
    for n in names:
        if ckpt.model.params[n].shape != parameter_shapes(cfg)[n]:
            raise CheckpointError(f"parameter {n} has shape {ckpt.model.params[n].shape}")
    header = {
        "model": cfg.to_dict(),
        "layers": [{"name": n, "shape": list(ckpt.model.params[n].shape)} for n in names],
        "iteration": int(ckpt.iteration),
        "meta": ckpt.meta,
        "adam": None,
    }
    body = _blob(ckpt.model.params[n] for n in names)
    if ckpt.adam is not None:
        a = ckpt.adam
        header["adam"] = {"lr": a.lr, "beta1": a.beta1, "beta2": a.beta2, "eps": a.eps, "step": a.step}
        zeros = {n: np.zeros(parameter_shapes(cfg)[n]) for n in names}
        body += _blob(a.m.get(n, zeros[n]) for n in names)
        body += _blob(a.v.get(n, zeros[n]) for n in names)
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    payload = MAGIC + struct.pack("<HI", VERSION, len(head)) + head + body
    return payload + struct.pack("<I", zlib.crc32(payload))


def decode(raw: bytes, dtype=np.float64) -> Checkpoint:
    if len(raw) < 14 or raw[:4] != MAGIC:
        raise CheckpointError("not a model checkpoint (bad magic)")
    payload, (crc,) = raw[:-4], struct.unpack("<I", raw[-4:])
    if zlib.crc32(payload) != crc:
        raise CheckpointError("checkpoint checksum mismatch")
    version, head_len = struct.unpack("<HI", payload[4:10])
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    header = json.loads(payload[10:10 + head_len])
    cfg = ModelConfig.from_dict(header["model"])
    offset = 10 + head_len

    def read_all() -> dict[str, np.ndarray]:
        nonlocal offset
        out = {}
        for layer in header["layers"]:
            shape = tuple(layer["shape"])
            count = int(np.prod(shape))
            arr = np.frombuffer(payload, dtype="<f8", count=count, offset=offset).reshape(shape)
            out[layer["name"]] = arr.astype(dtype)
            offset += 8 * count
        return out

    params = read_all()
    expected = parameter_shapes(cfg)
    if {k: v.shape for k, v in params.items()} != expected:
        raise CheckpointError("layer list does not match the model configuration")
    adam = None
    if header["adam"] is not None:
        a = header["adam"]
        m, v = read_all(), read_all()
        adam = AdamState(a["lr"], a["beta1"], a["beta2"], a["eps"], a["step"], m, v)
    if offset != len(payload):
        raise CheckpointError("trailing bytes after parameter blobs")
    return Checkpoint(ScratchNet(cfg, params), adam, header["iteration"], header["meta"])


def save(path: str | Path, ckpt: Checkpoint) -> None:
    Path(path).write_bytes(encode(ckpt))


def load(path: str | Path, dtype=np.float64) -> Checkpoint:
    return decode(Path(path).read_bytes(), dtype)


def from_state(state: TrainState, meta: dict | None = None) -> Checkpoint:
    return Checkpoint(state.model, state.adam, state.iteration, dict(meta or {}))


def to_state(ckpt: Checkpoint, losses: list[float], dtype=np.float32) -> TrainState:
    """Resumable TrainState; weights and moments cast back to the training dtype."""
    model = ScratchNet(ckpt.model.cfg, {k: v.astype(dtype) for k, v in ckpt.model.params.items()})
    adam = ckpt.adam or AdamState()
    adam = AdamState(adam.lr, adam.beta1, adam.beta2, adam.eps, adam.step,
                     {k: v.astype(dtype) for k, v in adam.m.items()},
                     {k: v.astype(dtype) for k, v in adam.v.items()})
    return TrainState(model, adam, ckpt.iteration, list(losses[:ckpt.iteration]))


def write_loss_csv(path: str | Path, losses: list[float]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("iteration,loss\n")
        fh.writelines(f"{i + 1},{float(v)!r}\n" for i, v in enumerate(losses))


def read_loss_csv(path: str | Path) -> list[float]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != "iteration,loss":
        raise ValueError(f"{path}: expected header iteration,loss")
    return [float(line.split(",")[1]) for line in lines[1:]]
