"""Region similarity J, boundary accuracy F, and round-indexed curves."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import binary_erosion, distance_transform_edt

from .errors import InputError, ShapeError

_CROSS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


def _check_same_size(pred: np.ndarray, gt: np.ndarray):
    if pred.shape != gt.shape:
        raise ShapeError(f"size mismatch: pred {pred.shape} vs gt {gt.shape}")


def jaccard(pred: np.ndarray, gt: np.ndarray, object_id: int) -> float:
    """Intersection over union of the object's pixel sets.

    Both masks empty counts as a perfect 1.0.
    """
    _check_same_size(pred, gt)
    p = pred == object_id
    g = gt == object_id
    union = np.logical_or(p, g).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(p, g).sum() / union)


def boundary_pixels(mask: np.ndarray) -> np.ndarray:
    """4-neighborhood contour; pixels beyond the image edge count as background."""
    mask = mask.astype(bool)
    return mask & ~binary_erosion(mask, structure=_CROSS, border_value=0)


def default_boundary_tolerance(shape: tuple[int, int], frac: float = 0.008) -> int:
    """DAVIS-style tolerance: a fraction of the image diagonal, rounded up."""
    return int(math.ceil(frac * math.hypot(shape[0], shape[1])))


def boundary_f(
    pred: np.ndarray, gt: np.ndarray, object_id: int, tolerance: float | None = None
) -> float:
    """Boundary-matching F-measure with a pixel distance tolerance."""
    _check_same_size(pred, gt)
    pb = boundary_pixels(pred == object_id)
    gb = boundary_pixels(gt == object_id)
    npb, ngb = int(pb.sum()), int(gb.sum())
    if npb == 0 and ngb == 0:
        return 1.0
    if npb == 0 or ngb == 0:
        return 0.0
    if tolerance is None:
        tolerance = default_boundary_tolerance(pred.shape)
    dist_to_gt = distance_transform_edt(~gb)
    dist_to_pred = distance_transform_edt(~pb)
    precision = float((dist_to_gt[pb] <= tolerance).mean())
    recall = float((dist_to_pred[gb] <= tolerance).mean())
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


@dataclass
class RoundCurve:
    """Per-round mean scores over a whole interaction run."""

    j: list[float] = field(default_factory=list)
    f: list[float] = field(default_factory=list)

    @property
    def jf(self) -> list[float]:
        return [(a + b) / 2.0 for a, b in zip(self.j, self.f)]

    @property
    def rounds(self) -> int:
        return len(self.j)


def auc(scores: list[float] | np.ndarray) -> float:
    """Trapezoidal area under a per-round curve on a unit-normalized axis.

    Round r maps to (r - 1) / (R - 1); a single round degenerates to its
    own score.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise InputError("curve is empty")
    if scores.size == 1:
        return float(scores[0])
    x = np.linspace(0.0, 1.0, scores.size)
    return float(np.trapezoid(scores, x))


def frame_scores(
    pred_labels: np.ndarray, gt_labels: np.ndarray, object_count: int,
    boundary_tolerance: float | None = None,
) -> tuple[float, float]:
    """Mean J and F over the frame's objects."""
    js = [jaccard(pred_labels, gt_labels, k) for k in range(1, object_count + 1)]
    fs = [
        boundary_f(pred_labels, gt_labels, k, tolerance=boundary_tolerance)
        for k in range(1, object_count + 1)
    ]
    return float(np.mean(js)), float(np.mean(fs))


def curve_from_label_rounds(
    rounds_labels: list[list[np.ndarray]], gt_labels: list[np.ndarray],
    object_count: int,
) -> RoundCurve:
    """Build a round curve from per-round per-frame label maps."""
    curve = RoundCurve()
    for labels in rounds_labels:
        scores = [
            frame_scores(pred, gt, object_count)
            for pred, gt in zip(labels, gt_labels)
        ]
        curve.j.append(float(np.mean([s[0] for s in scores])))
        curve.f.append(float(np.mean([s[1] for s in scores])))
    return curve
