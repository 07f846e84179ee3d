import numpy as np
import pytest

from voxcascade.logic.volume import Volume3


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def random_volume(rng):
    def make(*shape, dtype=np.float64):
        return Volume3(rng.random(shape).astype(dtype))
    return make


def ball(shape, center, radius):
    grid = np.indices(shape, dtype=np.float64)
    distance = np.sqrt(sum((g - c) ** 2 for g, c in zip(grid, center)))
    return distance <= radius, distance


@pytest.fixture
def ball_mask():
    def make(shape, center, radius):
        inside, _ = ball(shape, center, radius)
        return Volume3(inside.astype(np.float32))
    return make
