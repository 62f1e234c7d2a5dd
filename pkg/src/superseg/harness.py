"""k-fold training/evaluation driver, layout sweeps and result files."""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import preprocess
from .codec import enumerate_layouts, squareness, tile_slices
from .errors import BadK, ConfigError, NumericalDivergence
from .metrics import FoldResult, SegScores, aggregate, evaluate_si, evaluate_volume, format_mean_std
from .store import load_dataset
from .synthgen import PhantomSpec, generate
from .tinynet import OptimState, UNet, UNetConfig, adamw_step, backward, build_unet, cosine_lr, dice_bce_loss
from .tinynet.checkpoint import save_checkpoint
from .volume import GridLayout, Volume

log = logging.getLogger(__name__)

MODES = ("si2d", "vol3d")
METRICS = ("dsc", "precision", "recall")
CSV_COLUMNS = [
    "mode", "sh", "sw", "image_size",
    "dsc_mean", "dsc_std", "precision_mean", "precision_std", "recall_mean", "recall_std",
    "seconds_per_epoch",
]
DEFAULT_DATASET = {"synth": {}, "n": 40}


@dataclass
class ExperimentConfig:
    """Declarative description of one cross-validated run.

    ``dataset`` is a manifest path or ``{"synth": <PhantomSpec fields>, "n": count}``.
    ``grid`` is ``"SHxSW"`` and only used in ``si2d`` mode. ``unet`` holds
    ``levels``/``base_width``; dims and input channels follow from mode and data.
    """

    dataset: str | dict = field(default_factory=lambda: dict(DEFAULT_DATASET))
    mode: str = "si2d"
    grid: str | None = "4x4"
    folds: int = 5
    epochs: int = 100
    batch_size: int = 4
    seed: int = 0
    unet: dict = field(default_factory=lambda: {"levels": 3, "base_width": 8})
    augment: bool = False
    normalize: bool = True
    clip_depth: int | None = None
    lr_max: float = 1e-3
    lr_min: float = 1e-5
    restart_period: int = 25
    weight_decay: float = 1e-5
    workers: int = 1
    record_timing: bool = False
    out_dir: str | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def snapshot(self) -> dict:
        """Config as a plain dict, minus fields that do not affect results."""
        d = dataclasses.asdict(self)
        for key in ("out_dir", "workers", "record_timing"):
            d.pop(key)
        return d

    @property
    def layout(self) -> GridLayout | None:
        if self.mode != "si2d" or self.grid is None:
            return None
        return GridLayout.parse(str(self.grid))

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.folds < 2:
            raise ConfigError(f"need at least 2 folds, got {self.folds}")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be positive, got {self.batch_size}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if self.mode == "si2d":
            if self.grid is None:
                raise ConfigError("si2d mode needs a grid layout")
            try:
                self.layout
            except ValueError as e:
                raise ConfigError(str(e)) from e
        try:
            UNetConfig(dims=2, in_channels=1, **self.unet)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"bad unet settings {self.unet}: {e}") from e


@dataclass
class RunRecord:
    config: dict
    folds: list[FoldResult]
    fold_seconds: list[float]
    epoch_losses: list[list[float]]
    volume_shape: tuple[int, int, int]  # (H, W, D)

    @property
    def case_scores(self) -> list[SegScores]:
        return [s for f in self.folds for s in f.cases]

    def aggregate(self, metric: str) -> tuple[float, float]:
        return aggregate([getattr(s, metric) for s in self.case_scores])

    @property
    def seconds_per_epoch(self) -> float:
        epochs = self.config["epochs"]
        return math.fsum(self.fold_seconds) / (len(self.fold_seconds) * max(epochs, 1))

    @property
    def layout(self) -> GridLayout | None:
        if self.config["mode"] != "si2d":
            return None
        return GridLayout.parse(self.config["grid"])

    def summary(self) -> str:
        tag = self.config["mode"] if self.layout is None else f"{self.config['mode']} {self.layout}"
        parts = [f"{m.upper() if m == 'dsc' else m} {format_mean_std(*self.aggregate(m))}" for m in METRICS]
        return f"{tag}: " + "  ".join(parts)


def kfold_split(n: int, k: int, seed: int) -> list[list[int]]:
    """Seeded shuffle of ``range(n)`` cut into ``k`` contiguous chunks (sizes differ by <= 1)."""
    if k < 1 or k > n:
        raise BadK(f"cannot split {n} cases into {k} folds")
    perm = np.random.default_rng(seed).permutation(n)
    return [sorted(int(i) for i in chunk) for chunk in np.array_split(perm, k)]


def load_cases(cfg: ExperimentConfig) -> list[tuple[str, Volume, Volume]]:
    """Load (or synthesize) the dataset and apply the configured preprocessing."""
    if isinstance(cfg.dataset, dict):
        spec = PhantomSpec.from_dict(cfg.dataset.get("synth", {}))
        pairs = generate(spec, int(cfg.dataset.get("n", 40)))
        cases = [(f"case{i:04d}", img, mask) for i, (img, mask) in enumerate(pairs)]
    else:
        cases = load_dataset(cfg.dataset)
    if not cases:
        raise ConfigError("dataset is empty")
    out = []
    for case_id, img, mask in cases:
        if cfg.clip_depth is not None:
            img, mask = preprocess.clip_depth(img, cfg.clip_depth), preprocess.clip_depth(mask, cfg.clip_depth)
        if cfg.normalize:
            img = preprocess.znormalize(img)
        out.append((case_id, img, mask))
    shapes = {(img.height, img.width, img.depth, img.channels) for _, img, _ in out}
    if len(shapes) != 1:
        raise ConfigError(f"all cases must share one shape, found {sorted(shapes)}")
    return out


def _network_config(cfg: ExperimentConfig, channels: int) -> UNetConfig:
    return UNetConfig(dims=2 if cfg.mode == "si2d" else 3, in_channels=channels, **cfg.unet)


def _as_network_input(cfg: ExperimentConfig, v: Volume) -> np.ndarray:
    if cfg.mode == "si2d":
        return tile_slices(v.data, cfg.layout)
    return v.data


def _fold_seed(seed: int, fold: int, stream: int) -> int:
    return int(np.random.SeedSequence([seed, fold, stream]).generate_state(1)[0])


def train_model(cfg: ExperimentConfig, train_cases, fold: int) -> tuple[UNet, list[float]]:
    """Train a fresh network on ``train_cases`` with AdamW and the restarting cosine schedule."""
    channels = train_cases[0][1].channels
    model = build_unet(_network_config(cfg, channels), seed=_fold_seed(cfg.seed, fold, 0))
    state = OptimState(lr=cfg.lr_max, weight_decay=cfg.weight_decay)
    rng = np.random.default_rng(_fold_seed(cfg.seed, fold, 1))
    if not cfg.augment:
        xs = np.stack([_as_network_input(cfg, img) for _, img, _ in train_cases])
        ys = np.stack([_as_network_input(cfg, mask) for _, _, mask in train_cases])
    # short datasets still get one (smaller) batch per epoch
    batch = min(cfg.batch_size, len(train_cases))
    losses = []
    for epoch in range(cfg.epochs):
        lr = cosine_lr(epoch, cfg.lr_max, cfg.lr_min, cfg.restart_period)
        if cfg.augment:
            aug = [preprocess.augment(img, mask, int(s)) for (_, img, mask), s in
                   zip(train_cases, rng.integers(0, 2**31, size=len(train_cases)))]
            xs = np.stack([_as_network_input(cfg, img) for img, _ in aug])
            ys = np.stack([_as_network_input(cfg, mask) for _, mask in aug])
        order = rng.permutation(len(train_cases))
        epoch_loss = []
        for start in range(0, len(order) - batch + 1, batch):
            idx = order[start : start + batch]
            loss = dice_bce_loss(model(xs[idx]), ys[idx])
            value = float(loss.data)
            if not math.isfinite(value):
                raise NumericalDivergence(f"non-finite loss {value} in fold {fold}, epoch {epoch}")
            model.zero_grad()
            backward(loss)
            adamw_step(model.params, state, lr)
            epoch_loss.append(value)
        losses.append(math.fsum(epoch_loss) / max(len(epoch_loss), 1))
    return model, losses


def evaluate_cases(cfg: ExperimentConfig, model, cases, workers: int = 1) -> list[SegScores]:
    """Score each case separately; the result does not depend on ``workers``."""
    layout = cfg.layout

    def one(case):
        _, img, mask = case
        if cfg.mode == "si2d":
            return evaluate_si(model, img, mask, layout)
        return evaluate_volume(model, img, mask)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, cases))
    return [one(c) for c in cases]


def run_experiment(cfg: ExperimentConfig, cases=None) -> RunRecord:
    cfg.validate()
    if cases is None:
        cases = load_cases(cfg)
    h, w, d = cases[0][1].height, cases[0][1].width, cases[0][1].depth
    if cfg.mode == "si2d" and cfg.layout.tiles != d:
        raise ConfigError(f"grid {cfg.layout} holds {cfg.layout.tiles} slices but depth is {d}")
    net_cfg = _network_config(cfg, cases[0][1].channels)
    spatial = (h * cfg.layout.sh, w * cfg.layout.sw) if cfg.mode == "si2d" else (d, h, w)
    if any(s % net_cfg.divisor for s in spatial):
        raise ConfigError(f"network input {spatial} is not divisible by {net_cfg.divisor}")
    if cfg.folds > len(cases):
        raise ConfigError(f"cannot split {len(cases)} cases into {cfg.folds} folds")

    splits = kfold_split(len(cases), cfg.folds, cfg.seed)
    out_dir = Path(cfg.out_dir) if cfg.out_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
    folds, seconds, losses = [], [], []
    for fold, val_idx in enumerate(splits):
        held = set(val_idx)
        train = [c for i, c in enumerate(cases) if i not in held]
        val = [cases[i] for i in val_idx]
        t0 = time.perf_counter()
        model, fold_losses = train_model(cfg, train, fold)
        seconds.append(time.perf_counter() - t0)
        scores = evaluate_cases(cfg, model, val, cfg.workers)
        folds.append(FoldResult(fold, [c[0] for c in val], scores))
        losses.append(fold_losses)
        log.info("fold %d: DSC %.3f (%.1fs)", fold, folds[-1].aggregate.dsc, seconds[-1])
        if out_dir:
            save_checkpoint(model, out_dir / f"fold{fold}.snet", checkpoint_meta(cfg))
    return RunRecord(cfg.snapshot(), folds, seconds, losses, (h, w, d))


def checkpoint_meta(cfg: ExperimentConfig) -> dict:
    return {"mode": cfg.mode, "grid": cfg.grid if cfg.mode == "si2d" else None,
            "normalize": cfg.normalize, "clip_depth": cfg.clip_depth}


def sort_by_squareness(layouts, h: int, w: int) -> list[GridLayout]:
    return sorted(layouts, key=lambda g: (-squareness(g, h, w), g.sh > g.sw))


def grid_sweep(cfg: ExperimentConfig, layouts=None) -> list[RunRecord]:
    """One si2d run per layout on shared folds and seed, most square layout first."""
    base = dataclasses.replace(cfg, mode="si2d")
    cases = load_cases(base)
    h, w, d = cases[0][1].height, cases[0][1].width, cases[0][1].depth
    layouts = enumerate_layouts(d) if layouts is None else [
        g if isinstance(g, GridLayout) else GridLayout.parse(str(g)) for g in layouts
    ]
    for g in layouts:
        if g.tiles != d:
            raise ConfigError(f"layout {g} does not tile depth {d}")
    records = []
    for g in sort_by_squareness(layouts, h, w):
        sub = None if cfg.out_dir is None else str(Path(cfg.out_dir) / f"si2d_{g}")
        run_cfg = dataclasses.replace(base, grid=str(g), out_dir=sub)
        record = run_experiment(run_cfg, cases)
        if sub:
            emit_results(record, sub, include_timing=cfg.record_timing)
        records.append(record)
    if cfg.out_dir:
        write_csv(records, Path(cfg.out_dir) / "sweep.csv", include_timing=cfg.record_timing)
    return records


def _fmt(x: float) -> str:
    return f"{x:.3f}"


def csv_row(record: RunRecord, include_timing: bool = False) -> dict:
    h, w, d = record.volume_shape
    g = record.layout
    row = {
        "mode": record.config["mode"],
        "sh": "-" if g is None else str(g.sh),
        "sw": "-" if g is None else str(g.sw),
        "image_size": f"{h}x{w}x{d}",
    }
    for m in METRICS:
        mean, std = record.aggregate(m)
        row[f"{m}_mean"], row[f"{m}_std"] = _fmt(mean), _fmt(std)
    row["seconds_per_epoch"] = _fmt(record.seconds_per_epoch) if include_timing else ""
    return row


def csv_text(records, include_timing: bool = False) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for r in records:
        writer.writerow(csv_row(r, include_timing))
    return buf.getvalue()


def write_csv(records, path, include_timing: bool = False) -> None:
    Path(path).write_text(csv_text(records, include_timing), encoding="utf-8")


def record_to_json(record: RunRecord, include_timing: bool = False) -> dict:
    doc = {
        "config": record.config,
        "volume_shape": list(record.volume_shape),
        "folds": [
            {
                "fold": f.fold,
                "cases": [{"id": cid, **s.to_dict()} for cid, s in zip(f.case_ids, f.cases)],
                "aggregate": f.aggregate.to_dict(),
                "epoch_losses": losses,
            }
            for f, losses in zip(record.folds, record.epoch_losses)
        ],
        "aggregate": {m: dict(zip(("mean", "std"), record.aggregate(m))) for m in METRICS},
    }
    if include_timing:
        doc["fold_seconds"] = record.fold_seconds
        doc["seconds_per_epoch"] = record.seconds_per_epoch
    return doc


def emit_results(record: RunRecord, out_dir, include_timing: bool = False) -> dict[str, Path]:
    """Write ``results.csv``, ``results.json`` and ``summary.txt`` into ``out_dir``.

    Wall-clock timings are left out unless ``include_timing``; without them the
    files are byte-identical across repeated runs of the same config.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "csv": out_dir / "results.csv",
        "json": out_dir / "results.json",
        "summary": out_dir / "summary.txt",
    }
    write_csv([record], paths["csv"], include_timing)
    paths["json"].write_text(
        json.dumps(record_to_json(record, include_timing), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    paths["summary"].write_text(record.summary() + "\n", encoding="utf-8")
    return paths


def load_config(path) -> ExperimentConfig:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path} must be a JSON object")
    return ExperimentConfig.from_dict(doc)
