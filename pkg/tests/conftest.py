import functools

import numpy as np
import pytest

from needlet_ustats.frame import build_frame
from needlet_ustats.harness import equatorial_center
from needlet_ustats.sphere import uniform_density


@functools.lru_cache(maxsize=None)
def frame(B, j, q):
    return build_frame(B, j, q)


def random_points(rng, n, q):
    g = rng.standard_normal((n, q + 1))
    return g / np.linalg.norm(g, axis=1)[:, None]


@pytest.fixture
def rng():
    return np.random.default_rng(20261015)


@pytest.fixture(scope="session")
def f2():
    return uniform_density(2)


@pytest.fixture(scope="session")
def frame22():
    return frame(2.0, 2, 2)


def center(fr):
    return equatorial_center(fr)
