"""Sequence data: synthetic generation, DAVIS-layout loading, mask and
scribble serialization, session snapshots, and configuration files.

Frames are 8-bit RGB arrays; ground-truth masks are 8-bit indexed images
whose palette index equals the object label (0 = background).  Synthetic
rendering is hard-edged (no anti-aliasing) so boundary metrics have
unambiguous ground truth.
"""

from __future__ import annotations

import configparser
import json
import re
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import InputError, LoadError
from .features import ExtractorConfig
from .segmenter import HeadParams

# Shared object palette: label index -> display RGB.  Index 0 is background.
PALETTE = [
    (0, 0, 0),
    (230, 25, 75),
    (60, 180, 75),
    (255, 225, 25),
    (0, 130, 200),
    (245, 130, 48),
    (145, 30, 180),
    (70, 240, 240),
]


@dataclass
class VideoSequence:
    frames: list[np.ndarray]
    gt: list[np.ndarray] | None
    object_count: int
    id: str = "sequence"

    def __post_init__(self):
        if not self.frames:
            raise InputError("sequence has no frames")
        shape = self.frames[0].shape
        for i, f in enumerate(self.frames):
            if f.shape != shape:
                raise InputError(f"frame {i} shape {f.shape} differs from {shape}")
        if self.gt is not None and len(self.gt) != len(self.frames):
            raise InputError("ground truth not aligned 1:1 with frames")

    @property
    def frame_count(self) -> int:
        return len(self.frames)

    @property
    def shape(self) -> tuple[int, int]:
        return self.frames[0].shape[:2]


# ---------------------------------------------------------------------------
# Synthetic sequences
# ---------------------------------------------------------------------------

@dataclass
class ShapeSpec:
    """One rendered shape: a labeled object or an unlabeled occluder."""

    kind: str  # square | disc | bar
    color: tuple[int, int, int]
    size: int
    waypoints: list[tuple[float, float]]  # (x, y) centers, interpolated over time
    scale: tuple[float, float] = (1.0, 1.0)  # start/end size multiplier
    z: int = 0  # larger z is painted on top


@dataclass
class SyntheticSpec:
    width: int = 64
    height: int = 64
    frame_count: int = 10
    objects: list[ShapeSpec] = field(default_factory=list)
    occluders: list[ShapeSpec] = field(default_factory=list)
    noise_level: float = 0.02
    seed: int = 0
    id: str = "synthetic"

    def __post_init__(self):
        if not self.objects:
            raise InputError("spec needs at least one object")
        if self.frame_count < 2:
            raise InputError("spec needs at least two frames")


def _interp_waypoints(waypoints, t: int, frame_count: int) -> tuple[float, float]:
    if len(waypoints) == 1:
        return waypoints[0]
    s = 0.0 if frame_count == 1 else t / (frame_count - 1) * (len(waypoints) - 1)
    i = min(int(np.floor(s)), len(waypoints) - 2)
    frac = s - i
    x = waypoints[i][0] * (1 - frac) + waypoints[i + 1][0] * frac
    y = waypoints[i][1] * (1 - frac) + waypoints[i + 1][1] * frac
    return x, y


def _shape_mask(shape: ShapeSpec, t: int, spec: SyntheticSpec) -> np.ndarray:
    x, y = _interp_waypoints(shape.waypoints, t, spec.frame_count)
    cx, cy = int(round(x)), int(round(y))
    scale = shape.scale[0] + (shape.scale[1] - shape.scale[0]) * (
        t / max(spec.frame_count - 1, 1)
    )
    size = max(1, int(round(shape.size * scale)))
    mask = np.zeros((spec.height, spec.width), dtype=bool)
    if shape.kind == "square":
        half = size // 2
        y0, y1 = max(0, cy - half), min(spec.height, cy - half + size)
        x0, x1 = max(0, cx - half), min(spec.width, cx - half + size)
        mask[y0:y1, x0:x1] = True
    elif shape.kind == "disc":
        r = size / 2.0
        yy, xx = np.mgrid[0 : spec.height, 0 : spec.width]
        mask[(yy - cy) ** 2 + (xx - cx) ** 2 <= r * r] = True
    elif shape.kind == "bar":
        half_w = size // 2
        half_h = max(1, size // 6)
        y0, y1 = max(0, cy - half_h), min(spec.height, cy + half_h + 1)
        x0, x1 = max(0, cx - half_w), min(spec.width, cx + half_w + 1)
        mask[y0:y1, x0:x1] = True
    else:
        raise InputError(f"unknown shape kind {shape.kind!r}")
    if not mask.any():
        raise InputError(f"shape {shape.kind} at frame {t} left the canvas entirely")
    return mask


def _textured_background(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    """Static near-neutral texture: a smooth luminance field with mild
    per-channel tinting, so object hues stay clearly separable."""
    from .numerics import resample

    luminance = rng.uniform(55, 115, size=(6, 6, 1))
    tint = rng.uniform(-12, 12, size=(6, 6, 3))
    bg = resample(luminance + tint, spec.height, spec.width, mode="bilinear")
    return bg


def generate_synthetic(spec: SyntheticSpec) -> VideoSequence:
    """Render the spec into frames plus exact ground-truth label maps."""
    for obj in spec.objects:
        if obj.size >= min(spec.width, spec.height):
            raise InputError(f"object of size {obj.size} larger than canvas")
    rng = np.random.default_rng(spec.seed)
    background = _textured_background(spec, rng)
    drawables = [(obj.z, 1 + i, obj) for i, obj in enumerate(spec.objects)]
    drawables += [(occ.z, 0, occ) for occ in spec.occluders]
    drawables.sort(key=lambda item: item[0])

    frames, gts = [], []
    for t in range(spec.frame_count):
        frame = background.copy()
        labels = np.zeros((spec.height, spec.width), dtype=np.int32)
        for _, label, shape in drawables:
            mask = _shape_mask(shape, t, spec)
            frame[mask] = np.asarray(shape.color, dtype=np.float64)
            labels[mask] = label
        if spec.noise_level > 0:
            noise = rng.normal(0.0, spec.noise_level * 255.0, size=frame.shape)
            frame = frame + noise
        frames.append(np.clip(frame, 0, 255).astype(np.uint8))
        gts.append(labels)
    return VideoSequence(
        frames=frames, gt=gts, object_count=len(spec.objects), id=spec.id
    )


def benchmark_specs(count: int = 10) -> list[SyntheticSpec]:
    """The fixed desk-scale benchmark: seeded 64x64, 10-frame sequences
    with one or two moving objects and a partially occluding bar."""
    palette = [
        (220, 40, 40),
        (40, 90, 220),
        (40, 180, 60),
        (235, 200, 40),
        (170, 40, 200),
        (240, 130, 30),
    ]
    specs = []
    for i in range(count):
        rng = np.random.default_rng(1000 + i)
        n_objects = 1 + (i % 2)
        objects = []
        for k in range(n_objects):
            kind = ["square", "disc"][int(rng.integers(2))]
            size = int(rng.integers(26, 33))
            # keep trajectories clear of the image border (round-1
            # negatives are seeded from border cells)
            lo, hi = size // 2 + 4, 63 - size // 2 - 4
            x0 = float(rng.integers(lo, 29)) if k == 0 else float(rng.integers(36, hi + 1))
            y0 = float(rng.integers(lo, hi + 1))
            dx = float(rng.integers(-1, 2)) * 14.0
            dy = float(rng.integers(-1, 2)) * 14.0
            x1 = float(np.clip(x0 + dx, lo, hi))
            y1 = float(np.clip(y0 + dy, lo, hi))
            objects.append(
                ShapeSpec(
                    kind=kind,
                    color=palette[(2 * i + k) % len(palette)],
                    size=size,
                    waypoints=[(x0, y0), (x1, y1)],
                    z=k,
                )
            )
        occluders = [
            ShapeSpec(
                kind="bar",
                color=(120, 120, 125),
                size=22,
                waypoints=[(8.0, float(rng.integers(20, 44))), (56.0, float(rng.integers(20, 44)))],
                z=10,
            )
        ]
        specs.append(
            SyntheticSpec(
                width=64,
                height=64,
                frame_count=10,
                objects=objects,
                occluders=occluders,
                noise_level=0.015,
                seed=5000 + i,
                id=f"bench{i:02d}",
            )
        )
    return specs


# ---------------------------------------------------------------------------
# DAVIS-layout loading and saving
# ---------------------------------------------------------------------------

_FRAME_DIRS = ("JPEGImages", "frames")
_MASK_DIRS = ("Annotations", "masks")
_NUM_RE = re.compile(r"^(\d+)\.(jpg|jpeg|png|bmp)$", re.IGNORECASE)


def _numbered_files(directory: Path) -> list[tuple[int, Path]]:
    out = []
    for p in sorted(directory.iterdir()):
        m = _NUM_RE.match(p.name)
        if m:
            out.append((int(m.group(1)), p))
    out.sort(key=lambda item: item[0])
    return out


def load_sequence(path: str | Path, object_count: int | None = None) -> VideoSequence:
    """Load a sequence directory with frame files and optional indexed masks.

    Frame names must be zero-padded numerics, contiguous from the first
    index; masks (when present) must align 1:1 with frames.
    """
    root = Path(path)
    if not root.is_dir():
        raise LoadError(f"sequence directory not found: {root}")
    frame_dir = next((root / d for d in _FRAME_DIRS if (root / d).is_dir()), None)
    if frame_dir is None:
        frame_dir = root
    entries = _numbered_files(frame_dir)
    if not entries:
        raise LoadError(f"no numbered frame files in {frame_dir}")
    start = entries[0][0]
    for pos, (num, p) in enumerate(entries):
        if num != start + pos:
            raise LoadError(f"non-contiguous frame numbering at {p}")
    frames = []
    for _, p in entries:
        img = np.asarray(Image.open(p).convert("RGB"))
        if frames and img.shape != frames[0].shape:
            raise LoadError(f"frame size mismatch at {p}: {img.shape} vs {frames[0].shape}")
        frames.append(img)

    mask_dir = next((root / d for d in _MASK_DIRS if (root / d).is_dir()), None)
    gt = None
    max_label = 0
    if mask_dir is not None:
        mask_entries = _numbered_files(mask_dir)
        if len(mask_entries) != len(frames):
            raise LoadError(
                f"{mask_dir} holds {len(mask_entries)} masks for {len(frames)} frames"
            )
        gt = []
        for (_, p), frame in zip(mask_entries, frames):
            img = Image.open(p)
            if img.mode not in ("P", "L"):
                raise LoadError(f"mask {p} is not an indexed image (mode {img.mode})")
            arr = np.asarray(img).astype(np.int32)
            if arr.shape != frame.shape[:2]:
                raise LoadError(f"mask size mismatch at {p}")
            gt.append(arr)
            max_label = max(max_label, int(arr.max()))
    if object_count is None:
        object_count = max_label if max_label > 0 else 1
    return VideoSequence(frames=frames, gt=gt, object_count=object_count, id=root.name)


def _palette_bytes() -> bytes:
    table = bytearray(768)
    for idx, (r, g, b) in enumerate(PALETTE):
        table[3 * idx : 3 * idx + 3] = bytes((r, g, b))
    return bytes(table)


def save_label_map(labels: np.ndarray, path: str | Path):
    img = Image.fromarray(labels.astype(np.uint8), mode="P")
    img.putpalette(_palette_bytes())
    img.save(path)


def load_label_map(path: str | Path) -> np.ndarray:
    return np.asarray(Image.open(path)).astype(np.int32)


def save_frame(frame: np.ndarray, path: str | Path):
    Image.fromarray(frame.astype(np.uint8), mode="RGB").save(path)


def save_sequence(seq: VideoSequence, path: str | Path):
    """Write frames (and masks when present) in the directory layout
    understood by :func:`load_sequence`."""
    root = Path(path)
    (root / "JPEGImages").mkdir(parents=True, exist_ok=True)
    for t, frame in enumerate(seq.frames):
        save_frame(frame, root / "JPEGImages" / f"{t:05d}.png")
    if seq.gt is not None:
        (root / "Annotations").mkdir(parents=True, exist_ok=True)
        for t, labels in enumerate(seq.gt):
            save_label_map(labels, root / "Annotations" / f"{t:05d}.png")


def save_round_masks(session, round_index: int, path: str | Path) -> list[Path]:
    """Persist one round's label maps as indexed images, plus a metrics
    table when ground truth is available.  Loading the files back
    reproduces the label maps exactly."""
    from .metrics import frame_scores

    if round_index not in session.labels:
        raise InputError(f"round {round_index} not completed")
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    written = []
    for t, labels in enumerate(session.labels[round_index]):
        p = root / f"{t:05d}.png"
        save_label_map(labels, p)
        written.append(p)
    if session.sequence.gt is not None:
        lines = ["frame\tJ\tF"]
        for t, labels in enumerate(session.labels[round_index]):
            j, f = frame_scores(labels, session.sequence.gt[t], session.object_count)
            lines.append(f"{t}\t{j:.4f}\t{f:.4f}")
        (root / "metrics.txt").write_text("\n".join(lines) + "\n")
    return written


# ---------------------------------------------------------------------------
# Scribble documents
# ---------------------------------------------------------------------------

def scribble_sets_to_document(scribbles_by_object: dict[int, "object"]) -> dict:
    """Serialize per-object scribble sets into the shared JSON schema."""
    frames = {ss.frame_index for ss in scribbles_by_object.values()}
    if len(frames) != 1:
        raise InputError("scribble sets span multiple frames")
    strokes = []
    for obj in sorted(scribbles_by_object):
        ss = scribbles_by_object[obj]
        for polarity, stroke_list in (("positive", ss.positive), ("negative", ss.negative)):
            for stroke in stroke_list:
                strokes.append(
                    {
                        "object_id": obj,
                        "polarity": polarity,
                        "points": [[int(x), int(y)] for x, y in stroke],
                    }
                )
    return {"frame": frames.pop(), "strokes": strokes}


def scribble_document_to_sets(doc: dict, image_shape: tuple[int, int]) -> dict[int, "object"]:
    """Parse the JSON schema back into per-object scribble sets."""
    from .scribble_robot import ScribbleSet

    if "frame" not in doc or "strokes" not in doc:
        raise InputError("scribble document needs 'frame' and 'strokes'")
    frame = int(doc["frame"])
    by_object: dict[int, dict[str, list]] = {}
    for idx, stroke in enumerate(doc["strokes"]):
        try:
            obj = int(stroke["object_id"])
            polarity = stroke["polarity"]
            points = [(float(x), float(y)) for x, y in stroke["points"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"stroke {idx} is malformed: {exc}") from exc
        if polarity not in ("positive", "negative"):
            raise InputError(f"stroke {idx}: polarity must be positive or negative")
        if obj < 1:
            raise InputError(f"stroke {idx}: object_id must be >= 1")
        if not points:
            raise InputError(f"stroke {idx}: empty point list")
        by_object.setdefault(obj, {"positive": [], "negative": []})[polarity].append(
            np.asarray(points, dtype=np.float64)
        )
    return {
        obj: ScribbleSet.from_strokes(
            frame_index=frame,
            object_id=obj,
            positive=strokes["positive"],
            negative=strokes["negative"],
            image_shape=image_shape,
        )
        for obj, strokes in sorted(by_object.items())
    }


# ---------------------------------------------------------------------------
# Session snapshots
# ---------------------------------------------------------------------------

def save_session(session, path: str | Path):
    """Snapshot a session: text manifest plus referenced mask files."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    manifest = {
        "sequence_id": session.sequence.id,
        "object_count": session.object_count,
        "frame_count": session.sequence.frame_count,
        "round": session.round,
        "registry": [[r, t] for r, t in session.registry],
        "rounds": {},
    }
    for r, masks in session.masks.items():
        entries = []
        for t, mask in enumerate(masks):
            prob_ref = f"round{r:02d}_frame{t:05d}.npy"
            label_ref = f"round{r:02d}_frame{t:05d}.png"
            np.save(root / prob_ref, mask)
            save_label_map(session.labels[r][t], root / label_ref)
            entries.append({"frame": t, "probabilities": prob_ref, "labels": label_ref})
        manifest["rounds"][str(r)] = entries
    (root / "session.json").write_text(json.dumps(manifest, indent=2))


def load_session(path: str | Path, sequence: VideoSequence):
    from .workflow import Session

    root = Path(path)
    manifest_path = root / "session.json"
    if not manifest_path.is_file():
        raise LoadError(f"no session manifest at {manifest_path}")
    manifest = json.loads(manifest_path.read_text())
    if manifest["frame_count"] != sequence.frame_count:
        raise LoadError("snapshot frame count does not match the sequence")
    session = Session(sequence=sequence, object_count=manifest["object_count"])
    session.round = manifest["round"]
    session.registry = [(r, t) for r, t in manifest["registry"]]
    for r_str, entries in manifest["rounds"].items():
        r = int(r_str)
        masks, labels = [], []
        for entry in sorted(entries, key=lambda e: e["frame"]):
            masks.append(np.load(root / entry["probabilities"]))
            labels.append(load_label_map(root / entry["labels"]))
        session.masks[r] = masks
        session.labels[r] = labels
    return session


# ---------------------------------------------------------------------------
# Configuration files
# ---------------------------------------------------------------------------

@dataclass
class RobotConfig:
    rate_min: int = 100
    rate_max: int = 3000
    min_component_area: int = 30
    rounds: int = 8
    seeds: int = 3


@dataclass
class JitterConfig:
    """Affine deformation ranges used when emulating imperfect masks."""

    rotation_deg: float = 10.0
    scale_min: float = 0.95
    scale_max: float = 1.05
    translation_frac: float = 0.05
    shear_deg: float = 5.0


@dataclass
class EngineConfig:
    extractor: ExtractorConfig = field(default_factory=ExtractorConfig)
    head: HeadParams = field(default_factory=HeadParams)
    robot: RobotConfig = field(default_factory=RobotConfig)
    jitter: JitterConfig = field(default_factory=JitterConfig)
    resolve_threshold: float = 0.8
    boundary_tolerance_frac: float = 0.008
    global_only: bool = False  # ablation switch: drop the local estimate


def save_config(config: EngineConfig, path: str | Path):
    parser = configparser.ConfigParser()
    parser["extractor"] = {
        "color_space": config.extractor.color_space,
        "gradient_bins": str(config.extractor.gradient_bins),
        "smoothing_radius_global": str(config.extractor.smoothing_radii[0]),
        "smoothing_radius_local": str(config.extractor.smoothing_radii[1]),
    }
    parser["head"] = {
        "kappa": str(config.head.kappa),
        "gamma": str(config.head.gamma),
        "alpha": str(config.head.alpha),
        "beta": str(config.head.beta),
        "smoothing_iterations": str(config.head.smoothing_iterations),
    }
    parser["robot"] = {k: str(v) for k, v in asdict(config.robot).items()}
    parser["jitter"] = {k: str(v) for k, v in asdict(config.jitter).items()}
    parser["workflow"] = {
        "resolve_threshold": str(config.resolve_threshold),
        "boundary_tolerance_frac": str(config.boundary_tolerance_frac),
        "global_only": str(config.global_only),
    }
    with open(path, "w") as fh:
        parser.write(fh)


def load_config(path: str | Path) -> EngineConfig:
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise LoadError(f"cannot read config file {path}")
    cfg = EngineConfig()
    if parser.has_section("extractor"):
        s = parser["extractor"]
        cfg.extractor = ExtractorConfig(
            color_space=s.get("color_space", cfg.extractor.color_space),
            gradient_bins=s.getint("gradient_bins", cfg.extractor.gradient_bins),
            smoothing_radii=(
                s.getfloat("smoothing_radius_global", cfg.extractor.smoothing_radii[0]),
                s.getfloat("smoothing_radius_local", cfg.extractor.smoothing_radii[1]),
            ),
            gamma=cfg.head.gamma,
            kappa=cfg.head.kappa,
        )
    if parser.has_section("head"):
        s = parser["head"]
        cfg.head = HeadParams(
            kappa=s.getfloat("kappa", cfg.head.kappa),
            gamma=s.getfloat("gamma", cfg.head.gamma),
            alpha=s.getfloat("alpha", cfg.head.alpha),
            beta=s.getfloat("beta", cfg.head.beta),
            smoothing_iterations=s.getint(
                "smoothing_iterations", cfg.head.smoothing_iterations
            ),
        )
    if parser.has_section("robot"):
        s = parser["robot"]
        cfg.robot = RobotConfig(
            rate_min=s.getint("rate_min", cfg.robot.rate_min),
            rate_max=s.getint("rate_max", cfg.robot.rate_max),
            min_component_area=s.getint("min_component_area", cfg.robot.min_component_area),
            rounds=s.getint("rounds", cfg.robot.rounds),
            seeds=s.getint("seeds", cfg.robot.seeds),
        )
    if parser.has_section("jitter"):
        s = parser["jitter"]
        cfg.jitter = JitterConfig(
            rotation_deg=s.getfloat("rotation_deg", cfg.jitter.rotation_deg),
            scale_min=s.getfloat("scale_min", cfg.jitter.scale_min),
            scale_max=s.getfloat("scale_max", cfg.jitter.scale_max),
            translation_frac=s.getfloat("translation_frac", cfg.jitter.translation_frac),
            shear_deg=s.getfloat("shear_deg", cfg.jitter.shear_deg),
        )
    if parser.has_section("workflow"):
        s = parser["workflow"]
        cfg.resolve_threshold = s.getfloat("resolve_threshold", cfg.resolve_threshold)
        cfg.boundary_tolerance_frac = s.getfloat(
            "boundary_tolerance_frac", cfg.boundary_tolerance_frac
        )
        cfg.global_only = s.getboolean("global_only", cfg.global_only)
    return cfg


def save_head_params(params: HeadParams, path: str | Path):
    parser = configparser.ConfigParser()
    parser["head"] = {
        "kappa": str(params.kappa),
        "gamma": str(params.gamma),
        "alpha": str(params.alpha),
        "beta": str(params.beta),
        "smoothing_iterations": str(params.smoothing_iterations),
    }
    with open(path, "w") as fh:
        parser.write(fh)
