"""Segmentation heads: scribble-driven A-step, transfer-driven T-step,
and multi-object label resolution.

Probability maps are float64 arrays of shape (H, W, K) at image
resolution, one channel per object, values in [0, 1].  Label maps are
int arrays of shape (H, W) with 0 = background and k = object k.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AnnotationError, InputError, ProtocolError
from .features import (
    ExtractorConfig,
    FeatureGrid,
    border_cell_features,
    extract,
    scribble_feature_sets,
)
from .numerics import box_filter, resample, reshape_matrix_to_grid
from .transfer import transfer_global_multi, transfer_local

RESOLVE_THRESHOLD = 0.8  # probabilities below this are zeroed before argmax
POSITIVE_CLAMP = 0.95  # survives the resolve threshold
NEGATIVE_CLAMP = 0.05


@dataclass(frozen=True)
class HeadParams:
    """Calibratable scalar parameters of both heads.

    kappa/gamma are forwarded to the feature extractor; alpha blends the
    scribble response with the previous-round mask in the A-step; beta
    weights the global against the local estimate in the T-step.
    """

    kappa: float = 22.0
    gamma: float = 0.3
    alpha: float = 0.9
    beta: float = 0.5
    smoothing_iterations: int = 0

    def __post_init__(self):
        if not (0.0 <= self.alpha <= 1.0 and 0.0 <= self.beta <= 1.0):
            raise InputError("alpha and beta must lie in [0, 1]")
        if self.kappa <= 0:
            raise InputError("kappa must be > 0")
        if self.smoothing_iterations < 0:
            raise InputError("smoothing_iterations must be >= 0")

    def as_vector(self) -> np.ndarray:
        return np.array([self.kappa, self.gamma, self.alpha, self.beta])

    def with_vector(self, vec) -> "HeadParams":
        kappa, gamma, alpha, beta = [float(v) for v in vec]
        return HeadParams(
            kappa=kappa,
            gamma=gamma,
            alpha=alpha,
            beta=beta,
            smoothing_iterations=self.smoothing_iterations,
        )


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _upsample_prob(grid_map: np.ndarray, height: int, width: int) -> np.ndarray:
    return np.clip(resample(grid_map, height, width, mode="bilinear"), 0.0, 1.0)


def apply_scribble_clamp(prob: np.ndarray, scribbles) -> np.ndarray:
    """Force probabilities under the strokes; idempotent."""
    out = prob.copy()
    out[scribbles.positive_map] = np.maximum(out[scribbles.positive_map], POSITIVE_CLAMP)
    out[scribbles.negative_map] = np.minimum(out[scribbles.negative_map], NEGATIVE_CLAMP)
    return out


def astep(
    frame: np.ndarray,
    scribbles_by_object: dict[int, "object"],
    prev_mask: np.ndarray | None,
    params: HeadParams,
    extractor: ExtractorConfig | None = None,
    object_count: int | None = None,
    feature_grid: FeatureGrid | None = None,
) -> np.ndarray:
    """Segment the annotated frame from its scribbles.

    Per queried object, the response is sigmoid(s+ - s-) where s+/s- are
    the best inner products against positive/negative scribble features
    (negatives fall back to image-border cells when absent), blended
    with the previous-round mask (0.5 prior when absent), box-smoothed
    at grid resolution, upsampled, and clamped under the strokes.
    Objects without scribbles keep their previous-round channel.
    """
    if not scribbles_by_object:
        raise AnnotationError("at least one object must carry scribbles")
    cfg = (extractor or ExtractorConfig()).with_params(params.kappa, params.gamma)
    grid = feature_grid if feature_grid is not None else extract(frame, "local", cfg)
    h, w = frame.shape[:2]
    if object_count is None:
        object_count = max(scribbles_by_object)
    out = np.zeros((h, w, object_count), dtype=np.float64)

    flat = grid.values.reshape(-1, grid.channels)
    border = border_cell_features(grid)
    n_app = grid.appearance_channels
    for obj in range(1, object_count + 1):
        prev_ch = prev_mask[:, :, obj - 1] if prev_mask is not None else None
        ss = scribbles_by_object.get(obj)
        if ss is None:
            if prev_ch is not None:
                out[:, :, obj - 1] = prev_ch
            continue
        pos, neg = scribble_feature_sets(grid, ss)
        if neg.shape[0] > 0:
            # a negative whose appearance matches a positive is a
            # contradictory click on the same surface; it would poison
            # the margin for the whole object
            sim = (neg[:, :n_app] @ pos[:, :n_app].T).max(axis=1) / params.kappa
            neg = neg[sim < 0.97]
        if neg.shape[0] == 0:
            neg = border
        s_plus = (flat @ pos.T).max(axis=1)
        s_minus = (flat @ neg.T).max(axis=1)
        raw = _sigmoid(s_plus - s_minus).reshape(grid.height, grid.width)
        if prev_ch is None:
            prior = 0.5
        else:
            prior = resample(prev_ch, grid.height, grid.width, mode="area")
        blended = params.alpha * raw + (1.0 - params.alpha) * prior
        blended = box_filter(blended, params.smoothing_iterations)
        prob = _upsample_prob(blended, h, w)
        out[:, :, obj - 1] = apply_scribble_clamp(prob, ss)
    return out


def tstep_parts(
    frame_t: np.ndarray,
    prev_frame_mask: np.ndarray,
    annotated_set: list[tuple[np.ndarray, np.ndarray]],
    params: HeadParams,
    extractor: ExtractorConfig | None = None,
    feature_lookup=None,
    prev_frame: np.ndarray | None = None,
) -> dict:
    """T-step with intermediate estimates exposed (for losses and tests).

    ``annotated_set`` holds (frame, probability map) pairs for every
    annotated frame; ``prev_frame_mask`` is the adjacent already-
    segmented frame's map at image resolution.  ``feature_lookup`` maps
    (frame_key, level) to cached FeatureGrids; when absent, features are
    extracted on the fly and ``prev_frame`` must be given.
    """
    if not annotated_set:
        raise ProtocolError("annotated set is empty")
    cfg = (extractor or ExtractorConfig()).with_params(params.kappa, params.gamma)
    h, w = frame_t.shape[:2]

    def grids(frame, key, level):
        if feature_lookup is not None:
            return feature_lookup(key, level)
        return extract(frame, level, cfg)

    f_t_g = grids(frame_t, "target", "global")
    f_t_l = grids(frame_t, "target", "local")

    sources = []
    for idx, (frame_a, mask_a) in enumerate(annotated_set):
        f_a = grids(frame_a, ("annotated", idx), "global")
        field = resample(mask_a, f_a.height, f_a.width, mode="area")
        sources.append((f_a, field.reshape(f_a.height * f_a.width, -1)))
    g_flat = transfer_global_multi(f_t_g, sources)
    g_grid = reshape_matrix_to_grid(g_flat, f_t_g.height, f_t_g.width)

    if prev_frame is None and feature_lookup is None:
        raise ProtocolError("previous frame required when no feature cache is given")
    f_p_l = grids(prev_frame, "previous", "local")
    l_grid = transfer_local(f_t_l, f_p_l, prev_frame_mask)

    g_local = resample(g_grid, f_t_l.height, f_t_l.width, mode="bilinear")
    fused_local = params.beta * g_local + (1.0 - params.beta) * l_grid
    smoothed = box_filter(fused_local, params.smoothing_iterations)
    fused = np.clip(resample(smoothed, h, w, mode="bilinear"), 0.0, 1.0)
    return {
        "fused": fused,
        "global_grid": g_grid,
        "local_grid": l_grid,
        "fused_local": fused_local,
    }


def tstep(
    frame_t: np.ndarray,
    prev_frame_mask: np.ndarray,
    annotated_set: list[tuple[np.ndarray, np.ndarray]],
    params: HeadParams,
    extractor: ExtractorConfig | None = None,
    feature_lookup=None,
    prev_frame: np.ndarray | None = None,
) -> np.ndarray:
    """Probability map for a target frame: beta * global + (1-beta) * local."""
    return tstep_parts(
        frame_t,
        prev_frame_mask,
        annotated_set,
        params,
        extractor=extractor,
        feature_lookup=feature_lookup,
        prev_frame=prev_frame,
    )["fused"]


def resolve_labels(maps: np.ndarray, threshold: float = RESOLVE_THRESHOLD) -> np.ndarray:
    """Assign each pixel to the strongest surviving object.

    Probabilities below ``threshold`` are zeroed first; pixels with no
    survivor become background; exact ties go to the lowest object index.
    """
    maps = np.asarray(maps, dtype=np.float64)
    if maps.ndim == 2:
        maps = maps[:, :, None]
    if maps.shape[2] < 1:
        raise InputError("need at least one object channel")
    surviving = np.where(maps >= threshold, maps, 0.0)
    best = np.argmax(surviving, axis=2)
    top = np.max(surviving, axis=2)
    return np.where(top > 0.0, best + 1, 0).astype(np.int32)


def labels_to_probability(labels: np.ndarray, object_count: int) -> np.ndarray:
    """Per-object indicator channels from a label map."""
    h, w = labels.shape
    out = np.zeros((h, w, object_count), dtype=np.float64)
    for k in range(1, object_count + 1):
        out[:, :, k - 1] = labels == k
    return out
