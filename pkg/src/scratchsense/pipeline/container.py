"""RFSC trace container.

    b"RFSC"  u16 version  u8 stream tag  f64 tick rate  u32 channels  u64 ticks
    payload: float32 LE, tick-major (complex streams interleave re, im)
    u32 CRC32 of every preceding byte
"""
from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path

import numpy as np

MAGIC = b"RFSC"
VERSION = 1
_HEADER = struct.Struct("<4sHBdIQ")


class StreamTag(IntEnum):
    RAW_CUBE = 0
    MOTION_TRACE = 1


class ContainerError(ValueError):
    pass


@dataclass
class TraceContainer:
    tag: StreamTag
    tick_rate: float
    data: np.ndarray  # (ticks, channels); complex for raw cubes

    @property
    def n_ticks(self) -> int:
        return self.data.shape[0]

    @property
    def n_channels(self) -> int:
        return self.data.shape[1]


def encode(c: TraceContainer) -> bytes:
    data = np.asarray(c.data)
    if data.ndim != 2:
        raise ContainerError("container data must be (ticks, channels)")
    if c.tag == StreamTag.RAW_CUBE:
        payload = np.empty(data.shape + (2,), dtype="<f4")
        payload[..., 0] = data.real
        payload[..., 1] = data.imag
    else:
        if np.iscomplexobj(data):
            raise ContainerError("motion-trace streams are real")
        payload = data.astype("<f4")
    head = _HEADER.pack(MAGIC, VERSION, int(c.tag), float(c.tick_rate), data.shape[1], data.shape[0])
    body = head + np.ascontiguousarray(payload).tobytes()
    return body + struct.pack("<I", zlib.crc32(body))


def decode(raw: bytes) -> TraceContainer:
    if len(raw) < _HEADER.size + 4:
        raise ContainerError("truncated container")
    body, (crc,) = raw[:-4], struct.unpack("<I", raw[-4:])
    magic, version, tag, rate, channels, ticks = _HEADER.unpack_from(body)
    if magic != MAGIC:
        raise ContainerError("not an RFSC container (bad magic)")
    if zlib.crc32(body) != crc:
        raise ContainerError("container checksum mismatch")
    if version != VERSION:
        raise ContainerError(f"unsupported container version {version}")
    try:
        tag = StreamTag(tag)
    except ValueError:
        raise ContainerError(f"unknown stream tag {tag}") from None
    width = 2 if tag == StreamTag.RAW_CUBE else 1
    expected = ticks * channels * 4 * width
    if len(body) - _HEADER.size != expected:
        raise ContainerError(f"payload is {len(body) - _HEADER.size} bytes, header implies {expected}")
    values = np.frombuffer(body, dtype="<f4", offset=_HEADER.size)
    if tag == StreamTag.RAW_CUBE:
        pairs = values.reshape(ticks, channels, 2)
        data = np.empty((ticks, channels), dtype=np.complex64)
        data.real = pairs[..., 0]
        data.imag = pairs[..., 1]
    else:
        data = values.reshape(ticks, channels).astype(np.float32)
    return TraceContainer(tag, rate, data)


def write(path: str | Path, c: TraceContainer) -> bytes:
    raw = encode(c)
    Path(path).write_bytes(raw)
    return raw


def read(path: str | Path) -> TraceContainer:
    return decode(Path(path).read_bytes())
