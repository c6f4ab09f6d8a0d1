import numpy as np
import pytest

from scbench import Scorer, SyntheticSpec, region_mean_scorer


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=np.uint64(seed)))


def random_image(rng: np.random.Generator, channels: int, h: int, w: int) -> np.ndarray:
    return rng.random((channels, h, w)).astype(np.float32)


def constant_scorer(rows: np.ndarray, input_shape=(1, 3, 3)) -> Scorer:
    """Scorer that ignores its input and returns the same row every time."""
    rows = np.asarray(rows, dtype=np.float64)

    def score_fn(batch):
        return np.tile(rows, (batch.shape[0], 1))

    return Scorer(
        n_classes=rows.shape[0],
        input_shape=input_shape,
        identity="constant",
        score_fn=score_fn,
    )


@pytest.fixture
def two_region_scorer_3x3():
    spec = SyntheticSpec(kind="region_mean", regions=((0, 0, 2, 2), (1, 1, 3, 3)))
    return spec, region_mean_scorer(spec, 3, 3)
