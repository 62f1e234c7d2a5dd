"""On-disk formats: SVOL volumes, JSON dataset manifests and PGM previews.

SVOL layout (all little-endian)::

    0   4s   magic  b"SVOL"
    4   u32  version (1)
    8   4u32 H, W, D, C
    24  3f32 spacing (mm, h/w/d)
    36  f32  payload, H*W*D*C samples in (c, d, h, w) order

Concurrent writes to the same path are the caller's problem.
"""
from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BadChannel, BadMagic, BadVersion, DimOverflow, ManifestError, TruncatedFile
from .volume import SuperImage, Volume

SVOL_MAGIC = b"SVOL"
SVOL_VERSION = 1
_HEADER = struct.Struct("<4sI4I3f")
HEADER_SIZE = _HEADER.size  # 36
_MAX_SAMPLES = (1 << 62) // 4


def encode_volume(v: Volume) -> bytes:
    h, w, d, c = v.dims
    header = _HEADER.pack(SVOL_MAGIC, SVOL_VERSION, h, w, d, c, *v.spacing)
    return header + v.data.astype("<f4", copy=False).tobytes()


def decode_volume(buf: bytes) -> Volume:
    if len(buf) < HEADER_SIZE:
        raise TruncatedFile(f"need {HEADER_SIZE} header bytes, got {len(buf)}")
    magic, version, h, w, d, c, *spacing = _HEADER.unpack_from(buf)
    if magic != SVOL_MAGIC:
        raise BadMagic(f"expected magic {SVOL_MAGIC!r}, got {magic!r}")
    if version != SVOL_VERSION:
        raise BadVersion(f"unsupported SVOL version {version}")
    if min(h, w, d, c) < 1:
        raise DimOverflow(f"declared dims {(h, w, d, c)} contain a zero extent")
    n = h * w * d * c
    if n > _MAX_SAMPLES:
        raise DimOverflow(f"declared dims {(h, w, d, c)} overflow the payload size")
    if len(buf) != HEADER_SIZE + 4 * n:
        raise TruncatedFile(
            f"dims {(h, w, d, c)} need {HEADER_SIZE + 4 * n} bytes, file has {len(buf)}"
        )
    data = np.frombuffer(buf, dtype="<f4", count=n, offset=HEADER_SIZE)
    return Volume(data.astype(np.float32).reshape(c, d, h, w), tuple(spacing))


def write_volume(v: Volume, path) -> None:
    Path(path).write_bytes(encode_volume(v))


def read_volume(path) -> Volume:
    return decode_volume(Path(path).read_bytes())


def super_image_as_volume(si: SuperImage) -> Volume:
    """A super image stored as a depth-1 volume (the on-disk form of SI files)."""
    return Volume(si.data[:, None], si.spacing)


def export_pgm(si: SuperImage, channel: int, path) -> None:
    """Write one channel as an 8-bit binary PGM, min-max scaled to [0, 255]."""
    if not 0 <= channel < si.channels:
        raise BadChannel(f"channel {channel} out of range for {si.channels}-channel image")
    Path(path).write_bytes(pgm_bytes(si.data[channel]))


def pgm_bytes(plane: np.ndarray) -> bytes:
    plane = np.asarray(plane, dtype=np.float64)
    lo, hi = plane.min(), plane.max()
    if hi > lo:
        pixels = np.rint(255.0 * (plane - lo) / (hi - lo))
    else:
        pixels = np.zeros_like(plane)
    rows, cols = plane.shape
    return f"P5\n{cols} {rows}\n255\n".encode("ascii") + pixels.astype(np.uint8).tobytes()


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while raw[pos : pos + 1].isspace():
            pos += 1
        start = pos
        while not raw[pos : pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos].decode("ascii"))
    pos += 1
    if tokens[0] != "P5":
        raise BadMagic(f"not a binary PGM: {tokens[0]!r}")
    cols, rows = int(tokens[1]), int(tokens[2])
    return np.frombuffer(raw, dtype=np.uint8, count=rows * cols, offset=pos).reshape(rows, cols)


@dataclass(frozen=True)
class ManifestRecord:
    id: str
    image_path: Path
    mask_path: Path


def write_manifest(records, path) -> None:
    """Write ``records`` (ManifestRecord or dicts); paths are stored relative to the manifest."""
    path = Path(path)
    base = path.parent.resolve()
    out, seen = [], set()
    for r in records:
        r = r if isinstance(r, ManifestRecord) else ManifestRecord(r["id"], Path(r["image_path"]), Path(r["mask_path"]))
        if r.id in seen:
            raise ManifestError(f"duplicate id {r.id!r}")
        seen.add(r.id)
        out.append(
            {
                "id": r.id,
                "image_path": _relative(r.image_path, base),
                "mask_path": _relative(r.mask_path, base),
            }
        )
    path.write_text(json.dumps(out, indent=2) + "\n", encoding="utf-8")


def _relative(p: Path, base: Path) -> str:
    p = Path(p)
    if not p.is_absolute():
        return p.as_posix()
    try:
        return Path(os.path.relpath(p, base)).as_posix()
    except ValueError:
        return p.as_posix()


def load_manifest(path) -> list[ManifestRecord]:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ManifestError(f"{path}: invalid JSON ({e})") from e
    if not isinstance(doc, list):
        raise ManifestError(f"{path}: expected a JSON list of records")
    records, seen = [], set()
    for i, item in enumerate(doc):
        if not isinstance(item, dict) or set(item) != {"id", "image_path", "mask_path"}:
            raise ManifestError(f"{path}: record {i} must have exactly id, image_path, mask_path")
        if item["id"] in seen:
            raise ManifestError(f"{path}: duplicate id {item['id']!r}")
        seen.add(item["id"])
        image = (path.parent / item["image_path"]).resolve()
        mask = (path.parent / item["mask_path"]).resolve()
        for p in (image, mask):
            if not p.is_file():
                raise ManifestError(f"{path}: record {item['id']!r} references missing file {p}")
        records.append(ManifestRecord(str(item["id"]), image, mask))
    return records


def load_dataset(path) -> list[tuple[str, Volume, Volume]]:
    return [(r.id, read_volume(r.image_path), read_volume(r.mask_path)) for r in load_manifest(path)]
