"""Interactive protocol state machine.

A session advances in rounds: the user (or robot) scribbles on one frame,
the A-step segments it, and the T-step propagates the mask frame by frame
in both directions, halting before the nearest previously annotated frame
in each direction.  Propagated frames are blended with the previous
round's result, weighted by temporal distance to the two bounding
annotated frames, which damps drift far from the fresh annotation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data_io import EngineConfig, VideoSequence
from .errors import InputError, ProtocolError
from .features import extract
from .metrics import jaccard
from .segmenter import astep, resolve_labels, tstep_parts


@dataclass
class Session:
    """One sequence under interactive segmentation."""

    sequence: VideoSequence
    object_count: int
    masks: dict[int, list[np.ndarray]] = field(default_factory=dict)
    labels: dict[int, list[np.ndarray]] = field(default_factory=dict)
    registry: list[tuple[int, int]] = field(default_factory=list)  # (round, frame)
    round: int = 0
    feature_cache: dict = field(default_factory=dict)

    def annotated_frames(self) -> list[int]:
        return [t for _, t in self.registry]

    def is_annotated(self, frame: int) -> bool:
        return any(t == frame for _, t in self.registry)


@dataclass
class RoundResult:
    round: int
    labels: list[np.ndarray]
    per_frame_j: list[float] | None
    suggested_next: int | None


class Engine:
    """Bundles the configured heads with a per-session feature cache."""

    def __init__(self, config: EngineConfig | None = None):
        self.config = config or EngineConfig()

    @property
    def head(self):
        return self.config.head

    def features(self, session: Session, t: int, level: str):
        key = (t, level)
        if key not in session.feature_cache:
            cfg = self.config.extractor.with_params(self.head.kappa, self.head.gamma)
            session.feature_cache[key] = extract(session.sequence.frames[t], level, cfg)
        return session.feature_cache[key]

    def run_astep(self, session: Session, frame: int, scribbles, prev_mask):
        return astep(
            session.sequence.frames[frame],
            scribbles,
            prev_mask,
            self.head,
            extractor=self.config.extractor,
            object_count=session.object_count,
            feature_grid=self.features(session, frame, "local"),
        )

    def run_tstep(self, session: Session, t: int, prev_index: int, prev_mask,
                  annotated_entries: list[tuple[int, np.ndarray]]):
        params = self.head
        if self.config.global_only:
            params = params.with_vector([params.kappa, params.gamma, params.alpha, 1.0])

        def lookup(key, level):
            if key == "target":
                return self.features(session, t, level)
            if key == "previous":
                return self.features(session, prev_index, level)
            return self.features(session, annotated_entries[key[1]][0], level)

        parts = tstep_parts(
            session.sequence.frames[t],
            prev_mask,
            [(session.sequence.frames[a], m) for a, m in annotated_entries],
            params,
            extractor=self.config.extractor,
            feature_lookup=lookup,
        )
        return parts["fused"]

    def resolve(self, mask: np.ndarray) -> np.ndarray:
        return resolve_labels(mask, threshold=self.config.resolve_threshold)


def superpose(
    p_curr: np.ndarray, p_prev_round: np.ndarray, t: int, t_r: int, t_b: int
) -> np.ndarray:
    """Blend this round's propagated map with last round's stored map.

    The weight on the fresh map decays from 1 at the annotated frame t_r
    to 1/2 at the bounding annotated frame t_b; the two weights always
    sum to one.
    """
    if t_r == t_b:
        raise InputError("degenerate span: t_r == t_b")
    ratio = (t - t_b) / (t_r - t_b)
    w_curr = 0.5 * (1.0 + ratio)
    # difference form: equal inputs blend to themselves exactly
    return p_prev_round + w_curr * (p_curr - p_prev_round)


def select_worst_frame(session: Session, gt: list[np.ndarray] | None) -> int | None:
    """Robot-mode frame choice: lowest mean J, skipping annotated frames.

    Returns None when every frame is annotated (protocol complete).
    """
    if session.round < 1:
        raise ProtocolError("no completed round")
    if gt is None:
        raise InputError("worst-frame selection needs ground truth")
    annotated = set(session.annotated_frames())
    labels = session.labels[session.round]
    best_t, best_j = None, None
    for t in range(session.sequence.frame_count):
        if t in annotated:
            continue
        js = [jaccard(labels[t], gt[t], k) for k in range(1, session.object_count + 1)]
        mean_j = float(np.mean(js))
        if best_j is None or mean_j < best_j:
            best_t, best_j = t, mean_j
    return best_t


def _nearest_annotated(session: Session, start: int, direction: int) -> int | None:
    """Closest registered frame strictly beyond ``start`` along ``direction``."""
    candidates = [t for t in session.annotated_frames()
                  if (t - start) * direction > 0]
    if not candidates:
        return None
    return min(candidates, key=lambda t: abs(t - start))


def run_round(session: Session, engine: Engine, annotated_frame: int, scribbles) -> RoundResult:
    """Execute one annotate-then-propagate round.

    The annotated frame keeps its A-step output verbatim; propagation in
    each direction stops before the nearest previously annotated frame
    (whose mask is never overwritten) and runs to the sequence end when
    there is none.
    """
    seq = session.sequence
    if not 0 <= annotated_frame < seq.frame_count:
        raise InputError(f"frame {annotated_frame} out of range")
    if session.is_annotated(annotated_frame):
        raise ProtocolError(f"frame {annotated_frame} was already annotated")
    for obj, ss in scribbles.items():
        if ss.frame_index != annotated_frame:
            raise InputError(
                f"scribbles for object {obj} target frame {ss.frame_index}, "
                f"round annotates {annotated_frame}"
            )

    r = session.round + 1
    prev_round_masks = session.masks.get(r - 1)
    prev_mask_at = (
        prev_round_masks[annotated_frame] if prev_round_masks is not None else None
    )
    ann_mask = engine.run_astep(session, annotated_frame, scribbles, prev_mask_at)

    if prev_round_masks is not None:
        new_masks = list(prev_round_masks)
        new_labels = list(session.labels[r - 1])
    else:
        h, w = seq.shape
        zero = np.zeros((h, w, session.object_count))
        new_masks = [zero] * seq.frame_count
        new_labels = [engine.resolve(zero)] * seq.frame_count
    new_masks[annotated_frame] = ann_mask
    new_labels[annotated_frame] = engine.resolve(ann_mask)

    annotated_entries = [
        (t, new_masks[t]) for t in sorted(session.annotated_frames() + [annotated_frame])
    ]

    for direction in (+1, -1):
        boundary = _nearest_annotated(session, annotated_frame, direction)
        stop = boundary if boundary is not None else (
            seq.frame_count if direction > 0 else -1
        )
        t = annotated_frame + direction
        while t != stop:
            prev_index = t - direction
            raw = engine.run_tstep(
                session, t, prev_index, new_masks[prev_index], annotated_entries
            )
            if boundary is not None and prev_round_masks is not None:
                blended = superpose(raw, prev_round_masks[t], t, annotated_frame, boundary)
            else:
                blended = raw
            new_masks[t] = blended
            new_labels[t] = engine.resolve(blended)
            t += direction

    session.masks[r] = new_masks
    session.labels[r] = new_labels
    session.registry.append((r, annotated_frame))
    session.round = r

    per_frame_j = None
    suggested = None
    if seq.gt is not None:
        per_frame_j = [
            float(
                np.mean(
                    [jaccard(new_labels[t], seq.gt[t], k)
                     for k in range(1, session.object_count + 1)]
                )
            )
            for t in range(seq.frame_count)
        ]
        suggested = select_worst_frame(session, seq.gt)
    return RoundResult(
        round=r, labels=new_labels, per_frame_j=per_frame_j, suggested_next=suggested
    )
