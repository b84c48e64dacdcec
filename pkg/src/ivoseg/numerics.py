"""Dense grid/matrix primitives shared by every other module.

Conventions used throughout the package:

* pixel indexing is row-major: pixel ``i`` of an ``H x W`` grid is
  ``(i // W, i % W)``;
* a "matrix" is a 2-D float64 ndarray;
* a mask pattern is a boolean ndarray of the same shape marking eligible
  entries.

All functions here are pure and thread-safe.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateColumnError, ShapeError


def reshape_grid_to_matrix(grid: np.ndarray) -> np.ndarray:
    """Flatten an (H, W, C) feature grid into an (H*W, C) matrix.

    Row ``i`` holds the feature vector of the row-major pixel ``i``.
    """
    if grid.ndim != 3:
        raise ShapeError(f"expected (H, W, C) grid, got shape {grid.shape}")
    h, w, c = grid.shape
    return np.ascontiguousarray(grid, dtype=np.float64).reshape(h * w, c)


def reshape_matrix_to_grid(matrix: np.ndarray, height: int, width: int) -> np.ndarray:
    """Inverse of :func:`reshape_grid_to_matrix`."""
    if matrix.ndim != 2:
        raise ShapeError(f"expected 2-D matrix, got shape {matrix.shape}")
    if matrix.shape[0] != height * width:
        raise ShapeError(
            f"matrix has {matrix.shape[0]} rows, cannot reshape to {height}x{width}"
        )
    return np.asarray(matrix, dtype=np.float64).reshape(height, width, matrix.shape[1])


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with an explicit dimension check."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner dimensions differ: {a.shape} x {b.shape}")
    return a @ b


def column_softmax(w: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """Softmax-normalize each column of ``w`` over its eligible entries.

    Ineligible entries (``mask`` False) are excluded from the partition sum
    and are exactly zero in the result; they do not act as raw-zero
    affinities.  Stabilized by per-column max subtraction.

    Raises
    ------
    DegenerateColumnError
        if a column has no eligible entries.
    """
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2:
        raise ShapeError(f"expected 2-D matrix, got shape {w.shape}")
    if mask is None:
        col_max = w.max(axis=0, keepdims=True)
        e = np.exp(w - col_max)
    else:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != w.shape:
            raise ShapeError(f"mask shape {mask.shape} != matrix shape {w.shape}")
        eligible = mask.any(axis=0)
        if not eligible.all():
            bad = int(np.flatnonzero(~eligible)[0])
            raise DegenerateColumnError(f"column {bad} has no eligible entries")
        shifted = np.where(mask, w, -np.inf)
        col_max = shifted.max(axis=0, keepdims=True)
        e = np.exp(shifted - col_max)
    total = e.sum(axis=0, keepdims=True)
    return e / total


def _bilinear_weights(src: int, dst: int) -> np.ndarray:
    """(dst, src) interpolation weights, corner-anchored.

    Source and target corner samples coincide, so same-size resampling is
    the identity and corners survive upsampling exactly.
    """
    w = np.zeros((dst, src), dtype=np.float64)
    if src == 1:
        w[:, 0] = 1.0
        return w
    if dst == 1:
        pos = np.array([(src - 1) / 2.0])
    else:
        pos = np.arange(dst, dtype=np.float64) * (src - 1) / (dst - 1)
    i0 = np.clip(np.floor(pos).astype(int), 0, src - 2)
    frac = pos - i0
    w[np.arange(dst), i0] = 1.0 - frac
    w[np.arange(dst), i0 + 1] = frac
    return w


def _area_weights(src: int, dst: int) -> np.ndarray:
    """(dst, src) exact overlap-area averaging weights (row-stochastic)."""
    w = np.zeros((dst, src), dtype=np.float64)
    ratio = src / dst
    for o in range(dst):
        lo = o * ratio
        hi = (o + 1) * ratio
        i0 = int(np.floor(lo))
        i1 = min(src, int(np.ceil(hi)))
        for i in range(i0, i1):
            overlap = min(hi, i + 1) - max(lo, i)
            if overlap > 0:
                w[o, i] = overlap / ratio
    return w


def resample(
    arr: np.ndarray, target_h: int, target_w: int, mode: str = "bilinear"
) -> np.ndarray:
    """Resample a (H, W) or (H, W, C) array to ``target_h x target_w``.

    ``bilinear`` interpolates between corner-anchored samples; ``area``
    averages by exact rectangle overlap, so the mean value is preserved
    for any size ratio.  Same-size resampling is the identity in both
    modes.  Outputs are convex combinations of inputs, so values stay in
    the input range.
    """
    if target_h < 1 or target_w < 1:
        raise ShapeError(f"target size {target_h}x{target_w} must be >= 1")
    arr = np.asarray(arr, dtype=np.float64)
    squeeze = arr.ndim == 2
    if squeeze:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ShapeError(f"expected 2-D or 3-D array, got shape {arr.shape}")
    h, w, _ = arr.shape
    if mode == "bilinear":
        rw, cw = _bilinear_weights(h, target_h), _bilinear_weights(w, target_w)
    elif mode == "area":
        rw, cw = _area_weights(h, target_h), _area_weights(w, target_w)
    else:
        raise ValueError(f"unknown resample mode {mode!r}")
    out = np.einsum("oi,ijc,pj->opc", rw, arr, cw, optimize=True)
    return out[:, :, 0] if squeeze else out


def box_filter(arr: np.ndarray, iterations: int = 1) -> np.ndarray:
    """Repeated 3x3 box filtering with edge replication, per channel."""
    from scipy.ndimage import uniform_filter

    out = np.asarray(arr, dtype=np.float64)
    size = (3, 3) if out.ndim == 2 else (3, 3, 1)
    for _ in range(iterations):
        out = uniform_filter(out, size=size, mode="nearest")
    return out
