"""Global and local probability transfer between frames.

Both transfers share one scheme: an affinity matrix of feature inner
products is softmax-normalized column by column into a column-stochastic
transition matrix, which then redistributes per-pixel probability mass
from a source frame onto the target frame.  The global variant matches
every target cell against every cell of an annotated frame; the local
variant matches only within a small strided window around each cell of
the temporally adjacent frame and is stored in windowed form (the dense
HW x HW matrix exists only in test oracles).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, ShapeError
from .features import FeatureGrid
from .numerics import column_softmax, matmul, reshape_grid_to_matrix, resample


def global_affinity(f_t: FeatureGrid, f_a: FeatureGrid) -> np.ndarray:
    """Inner-product affinities, (target cells) x (annotated cells).

    Entry (i, j) is the affinity of target cell i to annotated cell j.
    """
    if f_t.channels != f_a.channels:
        raise ShapeError(
            f"channel mismatch: target {f_t.channels} vs annotated {f_a.channels}"
        )
    return matmul(f_t.matrix(), f_a.matrix().T)


def global_transition(f_t: FeatureGrid, f_a: FeatureGrid) -> np.ndarray:
    """Column-stochastic transition matrix from annotated to target cells."""
    return column_softmax(global_affinity(f_t, f_a))


def transfer_global(
    f_t: FeatureGrid, f_a: FeatureGrid, source_field: np.ndarray
) -> np.ndarray:
    """Transfer a per-cell field from an annotated frame to the target.

    ``source_field`` has one row per annotated cell (row-major) and any
    number of columns.  Column mass is conserved: each transition-matrix
    column is a probability distribution over target cells.
    """
    source_field = np.asarray(source_field, dtype=np.float64)
    if source_field.ndim == 1:
        source_field = source_field[:, None]
    expected = f_a.height * f_a.width
    if source_field.shape[0] != expected:
        raise ShapeError(
            f"source field has {source_field.shape[0]} rows, expected {expected}"
        )
    return matmul(global_transition(f_t, f_a), source_field)


def transfer_global_multi(
    f_t: FeatureGrid, annotated: list[tuple[FeatureGrid, np.ndarray]]
) -> np.ndarray:
    """Average the single-frame transfers over all annotated frames."""
    if not annotated:
        raise InputError("annotated list is empty")
    acc = None
    for f_a, source_field in annotated:
        term = transfer_global(f_t, f_a, source_field)
        acc = term if acc is None else acc + term
    return acc / len(annotated)


@dataclass(frozen=True)
class LocalWindow:
    """Strided search window around each target cell.

    Candidates are sampled from the (2*radius+1)^2 neighborhood with the
    given stride; with radius 4 and stride 2 an interior cell has 25
    candidates.
    """

    radius: int = 4
    stride: int = 2

    def __post_init__(self):
        if self.radius < 0 or self.stride < 1:
            raise InputError("window radius must be >= 0 and stride >= 1")

    def offsets(self) -> np.ndarray:
        """(K, 2) array of (dy, dx) offsets, symmetric around zero."""
        steps = np.arange(-self.radius, self.radius + 1, self.stride)
        dy, dx = np.meshgrid(steps, steps, indexing="ij")
        return np.stack([dy.ravel(), dx.ravel()], axis=1)


@dataclass
class WindowedAffinity:
    """Windowed affinity/transition storage.

    ``values[k, r, c]`` is the entry for target cell (r, c) and source
    cell (r, c) + offsets[k]; ``valid`` marks in-bounds pairs.  Entries
    outside the window are ineligible and materialize as exact zeros.
    """

    height: int
    width: int
    offsets: np.ndarray
    values: np.ndarray = field(repr=False)  # (K, H, W)
    valid: np.ndarray = field(repr=False)  # (K, H, W) bool
    dropped_columns: int = 0  # source cells reached by no target window

    def dense(self) -> tuple[np.ndarray, np.ndarray]:
        """Materialize the (HW, HW) matrix and its eligibility mask.

        Debug/test aid only; production paths stay windowed.
        """
        n = self.height * self.width
        mat = np.zeros((n, n), dtype=np.float64)
        mask = np.zeros((n, n), dtype=bool)
        for k, (dy, dx) in enumerate(self.offsets):
            rr, cc = np.nonzero(self.valid[k])
            i = rr * self.width + cc
            j = (rr + dy) * self.width + (cc + dx)
            mat[i, j] = self.values[k, rr, cc]
            mask[i, j] = True
        return mat, mask


def _shift2d(arr: np.ndarray, dy: int, dx: int, fill: float) -> np.ndarray:
    """out[r, c] = arr[r + dy, c + dx], with ``fill`` outside the array."""
    h, w = arr.shape
    out = np.full((h, w), fill, dtype=arr.dtype)
    ys = slice(max(0, -dy), min(h, h - dy))
    xs = slice(max(0, -dx), min(w, w - dx))
    if ys.start < ys.stop and xs.start < xs.stop:
        out[ys, xs] = arr[ys.start + dy : ys.stop + dy, xs.start + dx : xs.stop + dx]
    return out


def local_affinity(
    f_t: FeatureGrid, f_p: FeatureGrid, window: LocalWindow | None = None
) -> WindowedAffinity:
    """Windowed inner-product affinities between target and previous frame."""
    window = window or LocalWindow()
    if (f_t.height, f_t.width, f_t.channels) != (f_p.height, f_p.width, f_p.channels):
        raise ShapeError(
            f"local grids must match: {(f_t.height, f_t.width, f_t.channels)}"
            f" vs {(f_p.height, f_p.width, f_p.channels)}"
        )
    h, w = f_t.height, f_t.width
    offsets = window.offsets()
    k = len(offsets)
    values = np.zeros((k, h, w), dtype=np.float64)
    valid = np.zeros((k, h, w), dtype=bool)
    rows = np.arange(h)[:, None]
    cols = np.arange(w)[None, :]
    for idx, (dy, dx) in enumerate(offsets):
        ok = (rows + dy >= 0) & (rows + dy < h) & (cols + dx >= 0) & (cols + dx < w)
        shifted = _shift2d_channels(f_p.values, dy, dx)
        values[idx] = np.where(ok, np.einsum("rwc,rwc->rw", f_t.values, shifted), 0.0)
        valid[idx] = ok
    return WindowedAffinity(height=h, width=w, offsets=offsets, values=values, valid=valid)


def _shift2d_channels(arr: np.ndarray, dy: int, dx: int) -> np.ndarray:
    h, w = arr.shape[:2]
    out = np.zeros_like(arr)
    ys = slice(max(0, -dy), min(h, h - dy))
    xs = slice(max(0, -dx), min(w, w - dx))
    if ys.start < ys.stop and xs.start < xs.stop:
        out[ys, xs] = arr[ys.start + dy : ys.stop + dy, xs.start + dx : xs.stop + dx]
    return out


def local_transition(affinity: WindowedAffinity) -> WindowedAffinity:
    """Masked column softmax of a windowed affinity.

    Normalization runs over each *source* cell's incoming entries, so
    every stored column is a probability distribution over target cells.
    The default window's offset set is symmetric and contains (0, 0), so
    no source cell lacks an eligible entry; with a custom asymmetric
    window, border source cells referenced by no target window receive
    no normalization and transfer no mass (their count is reported in
    ``dropped_columns``).
    """
    k, h, w = affinity.values.shape
    # Regroup by source cell: col_vals[k, rj, cj] is the affinity of
    # target cell (rj, cj) - offsets[k] to source cell (rj, cj).
    col_vals = np.full((k, h, w), -np.inf)
    for idx, (dy, dx) in enumerate(affinity.offsets):
        vals = np.where(affinity.valid[idx], affinity.values[idx], -np.inf)
        col_vals[idx] = _shift2d(vals, -dy, -dx, -np.inf)
    reached = np.isfinite(col_vals).any(axis=0)
    col_max = np.where(reached, col_vals.max(axis=0), 0.0)
    e = np.where(np.isfinite(col_vals), np.exp(col_vals - col_max), 0.0)
    total = e.sum(axis=0)
    col_soft = np.divide(e, total, out=np.zeros_like(e), where=total > 0)
    # Scatter back to target-indexed storage.
    out = np.zeros_like(affinity.values)
    for idx, (dy, dx) in enumerate(affinity.offsets):
        out[idx] = np.where(affinity.valid[idx], _shift2d(col_soft[idx], dy, dx, 0.0), 0.0)
    result = WindowedAffinity(
        height=h, width=w, offsets=affinity.offsets, values=out, valid=affinity.valid
    )
    result.dropped_columns = int((~reached).sum())
    return result


def apply_windowed(transition: WindowedAffinity, source: np.ndarray) -> np.ndarray:
    """Multiply a windowed transition by a per-cell source field.

    ``source`` is (H, W) or (H, W, K); the result has the same shape.
    """
    source = np.asarray(source, dtype=np.float64)
    squeeze = source.ndim == 2
    if squeeze:
        source = source[:, :, None]
    if source.shape[:2] != (transition.height, transition.width):
        raise ShapeError(
            f"source shape {source.shape[:2]} != grid "
            f"{(transition.height, transition.width)}"
        )
    out = np.zeros_like(source)
    for idx, (dy, dx) in enumerate(transition.offsets):
        shifted = _shift2d_channels(source, dy, dx)
        out += transition.values[idx][:, :, None] * shifted
    return out[:, :, 0] if squeeze else out


def transfer_local(
    f_t: FeatureGrid,
    f_p: FeatureGrid,
    p_prev: np.ndarray,
    window: LocalWindow | None = None,
) -> np.ndarray:
    """Transfer the previous frame's probability map onto the target grid.

    ``p_prev`` is at image resolution, (H, W) or (H, W, K); it is
    area-downsampled to the local grid, pushed through the windowed
    transition, and returned at local-grid resolution.
    """
    p_prev = np.asarray(p_prev, dtype=np.float64)
    transition = local_transition(local_affinity(f_t, f_p, window))
    p_grid = resample(p_prev, f_t.height, f_t.width, mode="area")
    return apply_windowed(transition, p_grid)
