"""Deterministic two-channel ellipsoid phantoms with exact ground-truth masks."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import InfeasibleSpec
from .store import ManifestRecord, write_manifest, write_volume
from .volume import Volume


@dataclass(frozen=True)
class PhantomSpec:
    shape: tuple[int, int, int] = (32, 32, 16)  # (H, W, D)
    n_blobs: tuple[int, int] = (1, 3)  # inclusive
    radius: tuple[float, float] = (3.0, 6.0)  # per-axis radius range, voxels
    fg_mean: tuple[float, ...] = (0.6, 1.0)
    bg_mean: tuple[float, ...] = (0.0, 0.0)
    noise_sigma: float = 0.35
    seed: int = 0

    def __post_init__(self):
        for name in ("shape", "n_blobs", "radius", "fg_mean", "bg_mean"):
            object.__setattr__(self, name, tuple(getattr(self, name)))

    @property
    def channels(self) -> int:
        return len(self.fg_mean)

    def validate(self) -> None:
        if len(self.shape) != 3 or min(self.shape) < 1:
            raise InfeasibleSpec(f"shape must be 3 positive extents, got {self.shape}")
        lo, hi = self.n_blobs
        if lo < 1 or hi < lo:
            raise InfeasibleSpec(f"bad blob count range {self.n_blobs}")
        r_lo, r_hi = self.radius
        if r_lo < 1 or r_hi < r_lo:
            raise InfeasibleSpec(f"radii must satisfy 1 <= lo <= hi, got {self.radius}")
        if 2 * r_hi > min(self.shape) - 1:
            raise InfeasibleSpec(f"radius {r_hi} does not fit inside shape {self.shape}")
        if len(self.fg_mean) != len(self.bg_mean) or not self.fg_mean:
            raise InfeasibleSpec("fg_mean and bg_mean need one entry per channel")
        if self.noise_sigma < 0:
            raise InfeasibleSpec(f"noise_sigma must be >= 0, got {self.noise_sigma}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PhantomSpec":
        return cls(**d)


def _ellipsoid_mask(shape, centers, radii) -> np.ndarray:
    h, w, d = (np.arange(n, dtype=np.float64) for n in shape)
    mask = np.zeros((shape[2], shape[0], shape[1]), dtype=bool)  # (D, H, W)
    for (ch, cw, cd), (rh, rw, rd) in zip(centers, radii):
        q = (
            ((d[:, None, None] - cd) / rd) ** 2
            + ((h[None, :, None] - ch) / rh) ** 2
            + ((w[None, None, :] - cw) / rw) ** 2
        )
        mask |= q <= 1.0
    return mask


def sample_blobs(spec: PhantomSpec, rng: np.random.Generator):
    """Draw (centers, radii) for one case; both are lists of (h, w, d) triples."""
    count = int(rng.integers(spec.n_blobs[0], spec.n_blobs[1] + 1))
    centers, radii = [], []
    for _ in range(count):
        r = rng.uniform(spec.radius[0], spec.radius[1], size=3)
        c = [rng.uniform(ri, n - 1 - ri) for ri, n in zip(r, spec.shape)]
        centers.append(tuple(float(x) for x in c))
        radii.append(tuple(float(x) for x in r))
    return centers, radii


def generate_case(spec: PhantomSpec, index: int):
    """Case ``index`` of the dataset; independent of how many cases are drawn."""
    spec.validate()
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed, spawn_key=(index,)))
    centers, radii = sample_blobs(spec, rng)
    mask = _ellipsoid_mask(spec.shape, centers, radii)
    fg = np.asarray(spec.fg_mean, dtype=np.float64)[:, None, None, None]
    bg = np.asarray(spec.bg_mean, dtype=np.float64)[:, None, None, None]
    image = bg + (fg - bg) * mask[None]
    if spec.noise_sigma > 0:
        image = image + rng.normal(0.0, spec.noise_sigma, size=image.shape)
    return Volume(image.astype(np.float32)), Volume(mask[None].astype(np.float32)), (centers, radii)


def generate(spec: PhantomSpec, n: int) -> list[tuple[Volume, Volume]]:
    return [generate_case(spec, i)[:2] for i in range(n)]


def write_dataset(spec: PhantomSpec, n: int, out_dir) -> Path:
    """Generate ``n`` cases into ``out_dir`` as SVOL files plus ``manifest.json``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for i, (image, mask) in enumerate(generate(spec, n)):
        case_id = f"case{i:04d}"
        write_volume(image, out_dir / f"{case_id}_img.svol")
        write_volume(mask, out_dir / f"{case_id}_mask.svol")
        records.append(ManifestRecord(case_id, Path(f"{case_id}_img.svol"), Path(f"{case_id}_mask.svol")))
    manifest = out_dir / "manifest.json"
    write_manifest(records, manifest)
    return manifest
