"""Deterministic multi-scale feature extraction.

Replaces a learned encoder with hand-crafted per-cell features while
keeping the two-resolution contract used by the transfer stages: coarse
features (stride 8) for cross-frame matching against annotated frames,
fine features (stride 4) for matching against the adjacent frame.

Each cell vector is::

    [ appearance (3 color + n gradient-orientation bins), coords (2) ]

The appearance part is L2-normalized and scaled by sqrt(kappa), so inner
products between appearance parts equal ``kappa * cosine similarity``;
the coordinate part adds ``gamma^2 * <pos_i, pos_j>`` with positions
normalized to [-1, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter
from skimage.color import rgb2lab

from .errors import AnnotationError, InputError, ShapeError

GLOBAL_STRIDE = 8
LOCAL_STRIDE = 4


@dataclass(frozen=True)
class ExtractorConfig:
    """Knobs of the hand-crafted extractor.

    smoothing_radii maps resolution level to the Gaussian pre-smoothing
    radius (in image pixels) applied before gradient estimation.
    """

    color_space: str = "lab"
    gradient_bins: int = 8
    smoothing_radii: tuple[float, float] = (1.0, 0.5)  # (global, local)
    gamma: float = 0.3
    kappa: float = 22.0

    def __post_init__(self):
        if self.gradient_bins < 4:
            raise InputError("gradient_bins must be >= 4")
        if self.gamma < 0:
            raise InputError("gamma must be >= 0")
        if self.kappa <= 0:
            raise InputError("kappa must be > 0")

    def with_params(self, kappa: float, gamma: float) -> "ExtractorConfig":
        return ExtractorConfig(
            color_space=self.color_space,
            gradient_bins=self.gradient_bins,
            smoothing_radii=self.smoothing_radii,
            gamma=gamma,
            kappa=kappa,
        )


@dataclass
class FeatureGrid:
    """Per-cell feature vectors at a fixed stride relative to the image."""

    height: int
    width: int
    channels: int
    stride: int
    values: np.ndarray = field(repr=False)  # (height, width, channels)

    @property
    def appearance_channels(self) -> int:
        return self.channels - 2

    def matrix(self) -> np.ndarray:
        from .numerics import reshape_grid_to_matrix

        return reshape_grid_to_matrix(self.values)


def _cell_reduce(img: np.ndarray, stride: int) -> np.ndarray:
    """Mean-pool (H, W, C) pixels into ceil(H/s) x ceil(W/s) cells."""
    h, w = img.shape[:2]
    row_starts = np.arange(0, h, stride)
    col_starts = np.arange(0, w, stride)
    sums = np.add.reduceat(np.add.reduceat(img, row_starts, axis=0), col_starts, axis=1)
    row_counts = np.minimum(row_starts + stride, h) - row_starts
    col_counts = np.minimum(col_starts + stride, w) - col_starts
    counts = row_counts[:, None] * col_counts[None, :]
    return sums / counts[:, :, None]


def _orientation_histogram(gray: np.ndarray, bins: int, radius: float) -> np.ndarray:
    """Per-pixel soft gradient-orientation histogram, (H, W, bins).

    Orientations are unsigned (mod pi); magnitude is split linearly
    between the two adjacent bins so the histogram varies smoothly with
    the underlying image and with kappa/gamma downstream.
    """
    if radius > 0:
        gray = gaussian_filter(gray, sigma=radius, mode="nearest")
    if gray.shape[0] < 2 or gray.shape[1] < 2:
        return np.zeros(gray.shape + (bins,), dtype=np.float64)
    gy, gx = np.gradient(gray)
    mag = np.hypot(gx, gy)
    ori = np.mod(np.arctan2(gy, gx), np.pi)
    pos = ori / np.pi * bins
    b0 = np.floor(pos).astype(int) % bins
    frac = pos - np.floor(pos)
    hist = np.zeros(gray.shape + (bins,), dtype=np.float64)
    idx = np.indices(gray.shape)
    hist[idx[0], idx[1], b0] += mag * (1.0 - frac)
    hist[idx[0], idx[1], (b0 + 1) % bins] += mag * frac
    return hist


def extract(frame: np.ndarray, level: str, config: ExtractorConfig) -> FeatureGrid:
    """Extract a feature grid from an RGB frame at the given level.

    ``level`` is "global" (stride 8) or "local" (stride 4).
    """
    frame = np.asarray(frame)
    if frame.ndim != 3 or frame.shape[2] != 3:
        raise ShapeError(f"expected (H, W, 3) RGB frame, got shape {frame.shape}")
    if frame.shape[0] == 0 or frame.shape[1] == 0:
        raise InputError("frame has zero area")
    if level == "global":
        stride, radius = GLOBAL_STRIDE, config.smoothing_radii[0]
    elif level == "local":
        stride, radius = LOCAL_STRIDE, config.smoothing_radii[1]
    else:
        raise InputError(f"unknown level {level!r}")

    rgb = frame.astype(np.float64) / 255.0 if frame.dtype == np.uint8 else frame.astype(np.float64)
    lab = rgb2lab(np.clip(rgb, 0.0, 1.0))
    # Keep a/b centered and dominant (cosine must separate hues); the
    # luminance floor keeps the vector nonzero even for flat black frames.
    color = np.stack(
        [0.1 + 0.4 * lab[:, :, 0] / 100.0, lab[:, :, 1] / 60.0, lab[:, :, 2] / 60.0],
        axis=-1,
    )
    hist = _orientation_histogram(lab[:, :, 0] / 100.0, config.gradient_bins, radius)

    color_cells = _cell_reduce(color, stride)
    hist_cells = _cell_reduce(hist, stride)
    # Color carries the match, orientation refines it: an undamped
    # histogram would fragment uniform objects by local edge direction.
    appearance = np.concatenate([color_cells, 0.35 * hist_cells], axis=-1)
    norms = np.linalg.norm(appearance, axis=-1, keepdims=True)
    appearance = appearance / np.maximum(norms, 1e-12) * np.sqrt(config.kappa)

    gh, gw = appearance.shape[:2]
    ys = np.arange(gh, dtype=np.float64)
    xs = np.arange(gw, dtype=np.float64)
    yn = np.zeros(gh) if gh == 1 else ys / (gh - 1) * 2.0 - 1.0
    xn = np.zeros(gw) if gw == 1 else xs / (gw - 1) * 2.0 - 1.0
    coords = np.stack(np.meshgrid(xn, yn, indexing="xy"), axis=-1) * config.gamma

    values = np.concatenate([appearance, coords], axis=-1)
    return FeatureGrid(
        height=gh, width=gw, channels=values.shape[2], stride=stride, values=values
    )


def scribble_feature_sets(grid: FeatureGrid, scribbles) -> tuple[np.ndarray, np.ndarray]:
    """Collect the cell features under a scribble set's strokes.

    Every scribble pixel contributes the vector of the cell containing
    it; duplicate cells are dropped.  Returns (positive, negative) arrays
    of shape (n, channels); the negative set may be empty.
    """

    def cells_for(mask: np.ndarray) -> np.ndarray:
        ys, xs = np.nonzero(mask)
        if ys.size == 0:
            return np.zeros((0, grid.channels), dtype=np.float64)
        cy = np.minimum(ys // grid.stride, grid.height - 1)
        cx = np.minimum(xs // grid.stride, grid.width - 1)
        lin = np.unique(cy * grid.width + cx)
        return grid.values[lin // grid.width, lin % grid.width]

    pos = cells_for(scribbles.positive_map)
    neg = cells_for(scribbles.negative_map)
    if pos.shape[0] == 0:
        raise AnnotationError(
            f"object {scribbles.object_id} has no positive scribble pixels"
        )
    return pos, neg


def border_cell_features(grid: FeatureGrid) -> np.ndarray:
    """Features of the grid's border cells (round-1 negative seed)."""
    mask = np.zeros((grid.height, grid.width), dtype=bool)
    mask[0, :] = mask[-1, :] = True
    mask[:, 0] = mask[:, -1] = True
    return grid.values[mask]
