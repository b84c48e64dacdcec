"""Emulated user interactions.

Round 1 samples annotation points from the ground-truth object; later
rounds compare the prediction with the ground truth and trace corrective
strokes on the error regions: positives on missed object parts, negatives
on spurious predictions.  Strokes follow the longest path of each error
component's morphological skeleton, which yields curve-like, human-
plausible scribbles instead of blobs.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import binary_erosion, distance_transform_edt, label as cc_label
from skimage.draw import line as draw_line
from skimage.morphology import skeletonize

from .errors import AnnotationError, InputError, ShapeError

MIN_COMPONENT_AREA = 30  # error blobs below this are not worth a scribble


def rasterize_strokes(
    strokes: list[np.ndarray], image_shape: tuple[int, int]
) -> np.ndarray:
    """1-pixel-wide polyline rasterization onto a boolean map."""
    h, w = image_shape
    out = np.zeros((h, w), dtype=bool)
    for stroke in strokes:
        pts = np.asarray(stroke, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise InputError(f"stroke must be an (N, 2) point list, got {pts.shape}")
        xs = np.rint(pts[:, 0]).astype(int)
        ys = np.rint(pts[:, 1]).astype(int)
        if (xs < 0).any() or (xs >= w).any() or (ys < 0).any() or (ys >= h).any():
            raise InputError("stroke point outside image bounds")
        if len(pts) == 1:
            out[ys[0], xs[0]] = True
            continue
        for i in range(len(pts) - 1):
            rr, cc = draw_line(ys[i], xs[i], ys[i + 1], xs[i + 1])
            out[rr, cc] = True
    return out


@dataclass
class ScribbleSet:
    """Positive/negative strokes for one frame and one object."""

    frame_index: int
    object_id: int
    positive: list[np.ndarray] = field(default_factory=list)  # (N, 2) of (x, y)
    negative: list[np.ndarray] = field(default_factory=list)
    positive_map: np.ndarray | None = None
    negative_map: np.ndarray | None = None

    @classmethod
    def from_strokes(cls, frame_index, object_id, positive, negative, image_shape):
        pos_map = rasterize_strokes(positive, image_shape)
        neg_map = rasterize_strokes(negative, image_shape)
        if np.logical_and(pos_map, neg_map).any():
            raise InputError("positive and negative scribbles overlap")
        return cls(
            frame_index=frame_index,
            object_id=object_id,
            positive=[np.asarray(s, dtype=np.float64) for s in positive],
            negative=[np.asarray(s, dtype=np.float64) for s in negative],
            positive_map=pos_map,
            negative_map=neg_map,
        )

    @property
    def empty(self) -> bool:
        return not self.positive and not self.negative

    def has_positive(self) -> bool:
        return len(self.positive) > 0


def generate_points(
    gt_mask: np.ndarray, object_id: int, rate: int, rng: np.random.Generator,
    frame_index: int = 0,
) -> ScribbleSet:
    """Sample one positive point per ``rate`` object pixels (at least one)."""
    ys, xs = np.nonzero(gt_mask == object_id)
    if ys.size == 0:
        raise AnnotationError(f"object {object_id} has no pixels")
    count = max(1, math.ceil(ys.size / rate))
    picks = rng.choice(ys.size, size=min(count, ys.size), replace=False)
    strokes = [np.array([[xs[i], ys[i]]], dtype=np.float64) for i in picks]
    return ScribbleSet.from_strokes(
        frame_index=frame_index,
        object_id=object_id,
        positive=strokes,
        negative=[],
        image_shape=gt_mask.shape,
    )


@dataclass(frozen=True)
class AffineJitter:
    """Sampled affine deformation ranges; the identity is always inside."""

    rotation_deg: float = 10.0
    scale: tuple[float, float] = (0.95, 1.05)
    translation_frac: float = 0.05
    shear_deg: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.rotation_deg < 0 or self.shear_deg < 0 or self.translation_frac < 0:
            raise InputError("jitter ranges must be nonnegative")
        if not (self.scale[0] <= 1.0 <= self.scale[1]):
            raise InputError("scale range must contain 1.0")


def apply_affine(
    mask: np.ndarray,
    rotation_deg: float = 0.0,
    scale: float = 1.0,
    shear_deg: float = 0.0,
    tx: float = 0.0,
    ty: float = 0.0,
) -> np.ndarray:
    """Warp a label map by an explicit affine transform (nearest neighbor).

    Rotation/shear/scale act about the image center, then translation;
    regions mapped from outside the frame become background.
    """
    h, w = mask.shape
    theta = math.radians(rotation_deg)
    shear = math.tan(math.radians(shear_deg))
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    fwd = np.array(
        [
            [scale * cos_t, scale * (shear * cos_t - sin_t)],
            [scale * sin_t, scale * (shear * sin_t + cos_t)],
        ]
    )
    inv = np.linalg.inv(fwd)
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    dx = xs - cx - tx
    dy = ys - cy - ty
    src_x = inv[0, 0] * dx + inv[0, 1] * dy + cx
    src_y = inv[1, 0] * dx + inv[1, 1] * dy + cy
    sx = np.rint(src_x).astype(int)
    sy = np.rint(src_y).astype(int)
    inside = (sx >= 0) & (sx < w) & (sy >= 0) & (sy < h)
    out = np.zeros_like(mask)
    out[inside] = mask[sy[inside], sx[inside]]
    return out


def deform_mask(gt_mask: np.ndarray, jitter: AffineJitter) -> np.ndarray:
    """Warp a label map by an affine transform sampled from the jitter.

    Identity ranges reproduce the input exactly.
    """
    rng = np.random.default_rng(jitter.seed)
    h, w = gt_mask.shape
    return apply_affine(
        gt_mask,
        rotation_deg=rng.uniform(-jitter.rotation_deg, jitter.rotation_deg),
        scale=rng.uniform(jitter.scale[0], jitter.scale[1]),
        shear_deg=rng.uniform(-jitter.shear_deg, jitter.shear_deg),
        tx=rng.uniform(-jitter.translation_frac, jitter.translation_frac) * w,
        ty=rng.uniform(-jitter.translation_frac, jitter.translation_frac) * h,
    )


_NEIGHBORS8 = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]


def _bfs_farthest(skeleton: np.ndarray, start: tuple[int, int]):
    """BFS over 8-connected skeleton pixels; returns farthest pixel + parents."""
    h, w = skeleton.shape
    dist = {start: 0}
    parent = {start: None}
    queue = deque([start])
    far = start
    while queue:
        y, x = queue.popleft()
        if dist[(y, x)] > dist[far]:
            far = (y, x)
        for dy, dx in _NEIGHBORS8:
            ny, nx = y + dy, x + dx
            if 0 <= ny < h and 0 <= nx < w and skeleton[ny, nx] and (ny, nx) not in dist:
                dist[(ny, nx)] = dist[(y, x)] + 1
                parent[(ny, nx)] = (y, x)
                queue.append((ny, nx))
    return far, parent


def _skeleton_longest_path(component: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Longest skeleton path of a connected region, as (N, 2) (x, y) points.

    The region is first eroded so the stroke keeps clear of the rim,
    where pixels sit next to correctly labeled ones (a human scribbles
    through the middle of an error blob, not along its edge).  Falls
    back to the innermost pixel when erosion or the skeleton degenerate.
    """
    skel = np.zeros_like(component)
    for erosions in (2, 1, 0):
        core = (
            binary_erosion(component, np.ones((3, 3), dtype=bool), iterations=erosions)
            if erosions
            else component
        )
        if not core.any():
            continue
        skel = skeletonize(core)
        if skel.sum() >= 2:
            break
    ys, xs = np.nonzero(skel)
    if ys.size == 0:
        dist = distance_transform_edt(component)
        y, x = np.unravel_index(np.argmax(dist), dist.shape)
        return np.array([[x, y]], dtype=np.float64)
    seed_idx = int(rng.integers(ys.size))
    end_a, _ = _bfs_farthest(skel, (int(ys[seed_idx]), int(xs[seed_idx])))
    end_b, parents = _bfs_farthest(skel, end_a)
    path = []
    node = end_b
    while node is not None:
        path.append(node)
        node = parents[node]
    return np.array([[x, y] for y, x in reversed(path)], dtype=np.float64)


def synthesize_error_scribbles(
    pred: np.ndarray,
    gt: np.ndarray,
    object_id: int,
    rng: np.random.Generator,
    frame_index: int = 0,
    min_component_area: int = MIN_COMPONENT_AREA,
) -> ScribbleSet:
    """Corrective strokes from the disagreement between pred and gt.

    One stroke per error component of at least ``min_component_area``
    pixels: positives on missed object regions, negatives on spurious
    ones.  Every stroke pixel stays inside its error region.
    """
    if pred.shape != gt.shape:
        raise ShapeError(f"size mismatch: pred {pred.shape} vs gt {gt.shape}")
    false_neg = (gt == object_id) & (pred != object_id)
    false_pos = (pred == object_id) & (gt != object_id)

    def strokes_for(region: np.ndarray) -> list[np.ndarray]:
        labeled, count = cc_label(region, structure=np.ones((3, 3), dtype=bool))
        strokes = []
        for comp_id in range(1, count + 1):
            component = labeled == comp_id
            if component.sum() < min_component_area:
                continue
            strokes.append(_skeleton_longest_path(component, rng))
        return strokes

    return ScribbleSet.from_strokes(
        frame_index=frame_index,
        object_id=object_id,
        positive=strokes_for(false_neg),
        negative=strokes_for(false_pos),
        image_shape=pred.shape,
    )


def pick_round1_frame(gt: list[np.ndarray]) -> int:
    """Default first annotation target: the frame with the most labeled area."""
    areas = [int((labels > 0).sum()) for labels in gt]
    return int(np.argmax(areas))


def robot_interact(
    session,
    engine,
    rounds: int,
    seed: int = 0,
    round1_frame: int | None = None,
    rate_bounds: tuple[int, int] = (100, 3000),
    min_component_area: int = MIN_COMPONENT_AREA,
) -> list:
    """Drive the full annotate-then-propagate protocol automatically.

    Requires ground truth on the session's sequence.  Deterministic for
    a fixed seed.  Returns the per-round results.
    """
    from .workflow import run_round, select_worst_frame

    gt = session.sequence.gt
    if gt is None:
        raise InputError("robot mode needs ground truth for every frame")
    rng = np.random.default_rng(seed)
    results = []
    for r in range(1, rounds + 1):
        if r == 1:
            frame = round1_frame if round1_frame is not None else pick_round1_frame(gt)
            scribbles = {}
            for obj in range(1, session.object_count + 1):
                if (gt[frame] == obj).sum() == 0:
                    continue
                rate = int(rng.integers(rate_bounds[0], rate_bounds[1] + 1))
                scribbles[obj] = generate_points(
                    gt[frame], obj, rate, rng, frame_index=frame
                )
        else:
            frame = select_worst_frame(session, gt)
            if frame is None:
                break
            scribbles = _corrective_scribbles(
                session, gt, frame, rng, min_component_area
            )
            if not scribbles:
                # worst frame is already clean; fall back to the next worst
                frame, scribbles = _next_correctable_frame(
                    session, gt, rng, min_component_area
                )
                if frame is None:
                    break
        results.append(run_round(session, engine, frame, scribbles))
    return results


def _innermost_point(mask: np.ndarray) -> np.ndarray:
    """(1, 2) stroke at the pixel deepest inside the mask."""
    dist = distance_transform_edt(mask)
    y, x = np.unravel_index(np.argmax(dist), dist.shape)
    return np.array([[x, y]], dtype=np.float64)


def _corrective_scribbles(session, gt, frame, rng, min_component_area):
    pred = session.labels[session.round][frame]
    scribbles = {}
    for obj in range(1, session.object_count + 1):
        ss = synthesize_error_scribbles(
            pred, gt[frame], obj, rng, frame_index=frame,
            min_component_area=min_component_area,
        )
        if ss.empty:
            continue
        if (gt[frame] == obj).sum() == 0:
            if ss.has_positive():
                raise AnnotationError("positive stroke for an object absent from gt")
            continue  # negative-only object with nothing to anchor on
        # Error strokes can be thin and hug true boundaries; a confirming
        # click deep inside the object keeps the refit anchored.
        anchor = _innermost_point(gt[frame] == obj)
        positives = ss.positive + [anchor]
        pos_map = rasterize_strokes(positives, pred.shape)
        if np.logical_and(pos_map, ss.negative_map).any():
            positives = ss.positive if ss.has_positive() else [anchor]
        ss = ScribbleSet.from_strokes(
            frame_index=frame,
            object_id=obj,
            positive=positives,
            negative=ss.negative,
            image_shape=pred.shape,
        )
        scribbles[obj] = ss
    return scribbles


def _next_correctable_frame(session, gt, rng, min_component_area):
    from .metrics import jaccard

    annotated = {t for _, t in session.registry}
    labels = session.labels[session.round]
    order = []
    for t in range(session.sequence.frame_count):
        if t in annotated:
            continue
        js = [jaccard(labels[t], gt[t], k) for k in range(1, session.object_count + 1)]
        order.append((float(np.mean(js)), t))
    order.sort()
    for _, t in order:
        scribbles = _corrective_scribbles(session, gt, t, rng, min_component_area)
        if scribbles:
            return t, scribbles
    return None, {}
