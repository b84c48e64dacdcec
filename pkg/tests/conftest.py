import numpy as np
import pytest

from ivoseg.data_io import ShapeSpec, SyntheticSpec, generate_synthetic


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def small_sequence(seed=11, frames=9, size=48, motion=(8.0, 4.0)):
    """One moving disc on a textured background, with ground truth."""
    spec = SyntheticSpec(
        width=size,
        height=size,
        frame_count=frames,
        objects=[
            ShapeSpec(
                kind="disc",
                color=(210, 50, 50),
                size=20,
                waypoints=[(20.0, 22.0), (20.0 + motion[0], 22.0 + motion[1])],
            )
        ],
        occluders=[],
        noise_level=0.01,
        seed=seed,
        id=f"small{seed}",
    )
    return generate_synthetic(spec)


@pytest.fixture
def disc_sequence():
    return small_sequence()
