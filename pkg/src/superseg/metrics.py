"""Overlap metrics on binary 3D masks and fold-level aggregation."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .codec import to_super_image, untile_slices
from .errors import DimMismatch, EmptyList, NonBinaryInput
from .preprocess import binarize
from .tinynet import no_grad
from .volume import GridLayout, Volume


@dataclass(frozen=True)
class SegScores:
    dsc: float
    precision: float
    recall: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class FoldResult:
    fold: int
    case_ids: list[str]
    cases: list[SegScores]
    aggregate: SegScores = field(init=False)

    def __post_init__(self):
        self.aggregate = SegScores(
            *(aggregate([getattr(c, m) for c in self.cases])[0] for m in ("dsc", "precision", "recall"))
        )


def _mask_array(v) -> np.ndarray:
    return v.data if isinstance(v, Volume) else np.asarray(v)


def score(pred, gt) -> SegScores:
    """Dice, precision and recall of a binary prediction against binary ground truth.

    Empty masks: both empty scores (1, 1, 1); empty prediction scores
    (0, 1, 0); empty ground truth scores (0, 0, 1).
    """
    p, g = _mask_array(pred), _mask_array(gt)
    if p.shape != g.shape:
        raise DimMismatch(f"prediction shape {p.shape} != ground truth shape {g.shape}")
    for name, a in (("prediction", p), ("ground truth", g)):
        if not np.all((a == 0) | (a == 1)):
            raise NonBinaryInput(f"{name} mask has values outside {{0, 1}}")
    p, g = p.astype(bool), g.astype(bool)
    tp = int(np.count_nonzero(p & g))
    n_pred, n_gt = int(np.count_nonzero(p)), int(np.count_nonzero(g))
    if n_pred == 0 and n_gt == 0:
        return SegScores(1.0, 1.0, 1.0)
    dsc = 2.0 * tp / (n_pred + n_gt)
    precision = tp / n_pred if n_pred else 1.0
    recall = tp / n_gt if n_gt else 1.0
    return SegScores(dsc, precision, recall)


def aggregate(values) -> tuple[float, float]:
    """Mean and sample standard deviation (n - 1); a single value has std 0."""
    values = [float(v) for v in values]
    if not values:
        raise EmptyList("cannot aggregate an empty list")
    mean = math.fsum(values) / len(values)
    if len(values) == 1:
        return mean, 0.0
    var = math.fsum((v - mean) ** 2 for v in values) / (len(values) - 1)
    return mean, math.sqrt(var)


def format_mean_std(mean: float, std: float) -> str:
    return f"{mean:.3f}±{std:.3f}"


def decode_prediction(prob_si: np.ndarray, layout: GridLayout, h: int, w: int) -> Volume:
    """``(C, H*sh, W*sw)`` probabilities -> binary 3D mask volume."""
    return binarize(Volume(untile_slices(prob_si, layout, h, w)))


def evaluate_si(model, image: Volume, gt: Volume, g: GridLayout) -> SegScores:
    """Segment ``image`` through its super image and score the result in 3D voxel space."""
    si = to_super_image(image, g)
    with no_grad():
        prob = model(si.data[None]).data[0]
    return score(decode_prediction(prob, g, image.height, image.width), gt)


def evaluate_volume(model, image: Volume, gt: Volume) -> SegScores:
    """Segment ``image`` with a 3D model and score it in the same voxel space."""
    with no_grad():
        prob = model(image.data[None]).data[0]
    return score(binarize(Volume(prob)), gt)
