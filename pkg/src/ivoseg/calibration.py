"""Loss functions and head-parameter fitting.

The combined loss is a class-balanced cross-entropy on the final
probability map plus a weighted auxiliary mean-square term on the raw
local-transfer output against the down-sampled ground truth (weight 0.1
by default).  Since only four scalars are fitted, calibration uses
coordinate descent with central finite-difference gradients rather than
an autodiff engine.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CalibrationError, InputError, ShapeError
from .features import ExtractorConfig
from .numerics import resample
from .scribble_robot import generate_points
from .segmenter import HeadParams, astep, tstep_parts

EPS = 1e-6
DEFAULT_LAMBDA = 0.1

# search box for (kappa, gamma, alpha, beta)
PARAM_BOUNDS = np.array([[0.5, 40.0], [0.0, 2.0], [0.0, 1.0], [0.0, 1.0]])


@dataclass(frozen=True)
class LossReport:
    l_c: float
    l_aux: float
    weight: float
    total: float


@dataclass(frozen=True)
class MiniSequence:
    """One annotated frame plus four targets drawn from the seven
    consecutive frames on one side of it."""

    annotated: int
    targets: tuple[int, int, int, int]
    direction: str  # forward | backward

    def __post_init__(self):
        if len(set(self.targets) | {self.annotated}) != 5:
            raise InputError("mini-sequence frames must be distinct")


def class_balanced_ce(pred: np.ndarray, gt: np.ndarray) -> float:
    """Pixel-wise class-balanced cross-entropy for one object channel.

    Foreground is weighted by the background share and vice versa; a
    frame with only one class present uses weight 1 for that class.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt_fg = np.asarray(gt).astype(bool)
    if pred.shape != gt_fg.shape:
        raise ShapeError(f"size mismatch: pred {pred.shape} vs gt {gt_fg.shape}")
    n = pred.size
    n_fg = int(gt_fg.sum())
    n_bg = n - n_fg
    if n_fg == 0 or n_bg == 0:
        w_fg = w_bg = 1.0
    else:
        w_fg = n_bg / n
        w_bg = n_fg / n
    p = np.clip(pred, EPS, 1.0 - EPS)
    loss = -(w_fg * np.log(p[gt_fg]).sum() + w_bg * np.log(1.0 - p[~gt_fg]).sum())
    return float(loss / n)


def aux_mse(local_transfer_out: np.ndarray, gt: np.ndarray) -> float:
    """Mean square error against the area-downsampled ground truth."""
    out = np.asarray(local_transfer_out, dtype=np.float64)
    target = resample(np.asarray(gt, dtype=np.float64), out.shape[0], out.shape[1], mode="area")
    if target.shape != out.shape:
        raise ShapeError(f"size mismatch after downsampling: {target.shape} vs {out.shape}")
    return float(np.mean((out - target) ** 2))


def combined_loss(
    pred: np.ndarray, local_out: np.ndarray, gt: np.ndarray,
    weight: float = DEFAULT_LAMBDA,
) -> LossReport:
    l_c = class_balanced_ce(pred, gt)
    l_aux = aux_mse(local_out, gt)
    return LossReport(l_c=l_c, l_aux=l_aux, weight=weight, total=l_c + weight * l_aux)


def sample_minisequence(sequence_length: int, rng: np.random.Generator) -> MiniSequence:
    """Pick an annotated frame and 4 of the 7 consecutive frames beside it."""
    if sequence_length < 8:
        raise InputError("sequence must have at least 8 frames")
    valid = [
        a
        for a in range(sequence_length)
        if a >= 7 or a + 7 <= sequence_length - 1
    ]
    annotated = int(valid[rng.integers(len(valid))])
    directions = []
    if annotated + 7 <= sequence_length - 1:
        directions.append("forward")
    if annotated >= 7:
        directions.append("backward")
    direction = directions[int(rng.integers(len(directions)))]
    offsets = rng.choice(7, size=4, replace=False) + 1
    offsets = np.sort(offsets)
    sign = 1 if direction == "forward" else -1
    targets = tuple(int(annotated + sign * o) for o in offsets)
    return MiniSequence(annotated=annotated, targets=targets, direction=direction)


def minisequence_loss(
    sequence,
    mini: MiniSequence,
    params: HeadParams,
    scribbles_by_object: dict,
    extractor: ExtractorConfig | None = None,
    weight: float = DEFAULT_LAMBDA,
) -> float:
    """Mean combined loss over the mini-sequence's target frames.

    The annotated frame is segmented from the given scribbles and then
    propagated target by target.  The chain carries the soft fused maps,
    which keeps the objective differentiable in the head parameters.
    """
    gt = sequence.gt
    a = mini.annotated
    ann_mask = astep(
        sequence.frames[a],
        scribbles_by_object,
        None,
        params,
        extractor=extractor,
        object_count=sequence.object_count,
    )
    prev_index, prev_mask = a, ann_mask
    total = 0.0
    for t in mini.targets:
        parts = tstep_parts(
            sequence.frames[t],
            prev_mask,
            [(sequence.frames[a], ann_mask)],
            params,
            extractor=extractor,
            prev_frame=sequence.frames[prev_index],
        )
        frame_loss = 0.0
        for obj in range(1, sequence.object_count + 1):
            report = combined_loss(
                parts["fused"][:, :, obj - 1],
                parts["local_grid"][:, :, obj - 1],
                gt[t] == obj,
                weight=weight,
            )
            frame_loss += report.total
        total += frame_loss / sequence.object_count
        prev_index, prev_mask = t, parts["fused"]
    return total / len(mini.targets)


@dataclass
class CalibrationProblem:
    """A frozen objective: fixed sequences, mini-sequences, and scribbles."""

    sequences: list
    minis: list[MiniSequence]
    scribbles: list[dict]
    weight: float = DEFAULT_LAMBDA
    extractor: ExtractorConfig | None = None

    @classmethod
    def build(
        cls,
        sequences,
        rng: np.random.Generator,
        minis_per_sequence: int = 1,
        weight: float = DEFAULT_LAMBDA,
        extractor: ExtractorConfig | None = None,
        point_rate: int = 300,
    ) -> "CalibrationProblem":
        if not sequences:
            raise InputError("need at least one training sequence")
        seqs, minis, scribbles = [], [], []
        for seq in sequences:
            if seq.gt is None:
                raise InputError(f"sequence {seq.id} has no ground truth")
            for _ in range(minis_per_sequence):
                mini = sample_minisequence(seq.frame_count, rng)
                by_object = {}
                for obj in range(1, seq.object_count + 1):
                    if (seq.gt[mini.annotated] == obj).sum() == 0:
                        continue
                    by_object[obj] = generate_points(
                        seq.gt[mini.annotated], obj, point_rate, rng,
                        frame_index=mini.annotated,
                    )
                seqs.append(seq)
                minis.append(mini)
                scribbles.append(by_object)
        return cls(sequences=seqs, minis=minis, scribbles=scribbles,
                   weight=weight, extractor=extractor)

    def objective(self, params: HeadParams) -> float:
        losses = [
            minisequence_loss(seq, mini, params, sc,
                              extractor=self.extractor, weight=self.weight)
            for seq, mini, sc in zip(self.sequences, self.minis, self.scribbles)
        ]
        value = float(np.mean(losses))
        if not np.isfinite(value):
            raise CalibrationError(f"non-finite objective at {params}")
        return value

    def objective_vector(self, vec: np.ndarray) -> float:
        template = HeadParams()
        return self.objective(template.with_vector(vec))


def fd_gradient(fn, x: np.ndarray, step: float = 1e-3) -> np.ndarray:
    """Central finite-difference gradient with per-coordinate steps."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for i in range(x.size):
        h = step * max(1.0, abs(x[i]))
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        grad[i] = (fn(xp) - fn(xm)) / (2.0 * h)
    return grad


def calibrate(
    params0: HeadParams,
    training_sequences,
    weight: float = DEFAULT_LAMBDA,
    iterations: int = 10,
    seed: int = 0,
    minis_per_sequence: int = 1,
    extractor: ExtractorConfig | None = None,
) -> HeadParams:
    """Coordinate descent on (kappa, gamma, alpha, beta).

    Each sweep takes a backtracking gradient step per coordinate, only
    accepting loss reductions, so the returned parameters never score
    worse than the initial ones.  Deterministic for a fixed seed.
    """
    rng = np.random.default_rng(seed)
    problem = CalibrationProblem.build(
        training_sequences, rng, minis_per_sequence=minis_per_sequence,
        weight=weight, extractor=extractor,
    )
    x = params0.as_vector().astype(np.float64)
    lo, hi = PARAM_BOUNDS[:, 0], PARAM_BOUNDS[:, 1]
    x = np.clip(x, lo, hi)
    best = problem.objective_vector(x)
    steps = np.array([1.0, 0.1, 0.1, 0.1])  # initial per-coordinate step sizes
    for _ in range(iterations):
        for i in range(x.size):
            h = 1e-3 * max(1.0, abs(x[i]))
            xp, xm = x.copy(), x.copy()
            xp[i] = min(x[i] + h, hi[i])
            xm[i] = max(x[i] - h, lo[i])
            denom = xp[i] - xm[i]
            if denom == 0:
                continue
            g = (problem.objective_vector(xp) - problem.objective_vector(xm)) / denom
            if g == 0:
                continue
            moved = False
            for _ in range(4):
                cand = x.copy()
                cand[i] = np.clip(x[i] - steps[i] * np.sign(g), lo[i], hi[i])
                if cand[i] == x[i]:
                    break
                value = problem.objective_vector(cand)
                if value < best:
                    x, best = cand, value
                    steps[i] *= 1.5
                    moved = True
                    break
                steps[i] *= 0.5
            if not moved:
                steps[i] = max(steps[i], 1e-4)
    return params0.with_vector(x)
