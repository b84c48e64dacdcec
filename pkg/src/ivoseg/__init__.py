"""Interactive video object segmentation at desk scale.

Scribble in one frame, propagate everywhere: a global transfer matches
the target frame against every annotated frame, a local transfer matches
it against the adjacent frame, and an interaction loop (human or robot)
refines the worst frame round by round.
"""

from .data_io import (
    EngineConfig,
    SyntheticSpec,
    VideoSequence,
    benchmark_specs,
    generate_synthetic,
    load_sequence,
)
from .features import ExtractorConfig, FeatureGrid, extract
from .metrics import auc, boundary_f, jaccard
from .scribble_robot import ScribbleSet, robot_interact
from .segmenter import HeadParams, astep, resolve_labels, tstep
from .workflow import Engine, RoundResult, Session, run_round, select_worst_frame

__version__ = "0.1.0"

__all__ = [
    "EngineConfig",
    "Engine",
    "ExtractorConfig",
    "FeatureGrid",
    "HeadParams",
    "RoundResult",
    "ScribbleSet",
    "Session",
    "SyntheticSpec",
    "VideoSequence",
    "astep",
    "auc",
    "benchmark_specs",
    "boundary_f",
    "extract",
    "generate_synthetic",
    "jaccard",
    "load_sequence",
    "resolve_labels",
    "robot_interact",
    "run_round",
    "select_worst_frame",
    "tstep",
]
