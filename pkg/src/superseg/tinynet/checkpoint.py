"""SNET checkpoints: an SVOL-style header followed by named float32 parameter blobs.

Layout (little-endian)::

    4s   magic b"SNET"
    u32  version (1)
    u32  metadata length, then that many bytes of UTF-8 JSON
         ({"unet": UNetConfig fields, ...caller extras})
    u32  parameter count
    per parameter: u32 name length, name (UTF-8), u32 ndim, ndim x u32 extents
    payload: each parameter's float32 values, in table order
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import BadMagic, BadVersion, TruncatedFile
from .tensor import Tensor
from .unet import UNet, UNetConfig

SNET_MAGIC = b"SNET"
SNET_VERSION = 1


def encode_checkpoint(model: UNet, extra: dict | None = None) -> bytes:
    meta = json.dumps({"unet": model.cfg.to_dict(), **(extra or {})}, sort_keys=True).encode("utf-8")
    parts = [SNET_MAGIC, struct.pack("<II", SNET_VERSION, len(meta)), meta, struct.pack("<I", len(model.params))]
    for name, p in model.params.items():
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)) + raw)
        parts.append(struct.pack(f"<I{p.data.ndim}I", p.data.ndim, *p.shape))
    for p in model.params.values():
        parts.append(p.data.astype("<f4").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf, self.pos = buf, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise TruncatedFile(f"checkpoint ends at byte {len(self.buf)}, needed {self.pos + n}")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u32s(self, count: int) -> tuple[int, ...]:
        return struct.unpack(f"<{count}I", self.take(4 * count))


def decode_checkpoint(buf: bytes) -> tuple[UNet, dict]:
    r = _Reader(buf)
    magic = r.take(4)
    if magic != SNET_MAGIC:
        raise BadMagic(f"expected magic {SNET_MAGIC!r}, got {magic!r}")
    version = r.u32()
    if version != SNET_VERSION:
        raise BadVersion(f"unsupported SNET version {version}")
    meta = json.loads(r.take(r.u32()).decode("utf-8"))
    table = []
    for _ in range(r.u32()):
        name = r.take(r.u32()).decode("utf-8")
        table.append((name, r.u32s(r.u32())))
    params = {}
    for name, shape in table:
        n = int(np.prod(shape))
        data = np.frombuffer(r.take(4 * n), dtype="<f4").astype(np.float32).reshape(shape)
        params[name] = Tensor(data, requires_grad=True, name=name)
    if r.pos != len(buf):
        raise TruncatedFile(f"{len(buf) - r.pos} trailing bytes after checkpoint payload")
    cfg = UNetConfig(**meta.pop("unet"))
    return UNet(cfg, params), meta


def save_checkpoint(model: UNet, path, extra: dict | None = None) -> None:
    Path(path).write_bytes(encode_checkpoint(model, extra))


def load_checkpoint(path) -> tuple[UNet, dict]:
    return decode_checkpoint(Path(path).read_bytes())
