import numpy as np
import pytest

from walkdim.fractals import euclidean_cloud
from walkdim.geometry import MeasureWeights, PointCloud


@pytest.fixture
def rng():
    return np.random.default_rng(20240711)


@pytest.fixture
def path5():
    """Five collinear unit-spaced points, the canonical tiny graph space."""
    return PointCloud(np.arange(5, dtype=float)[:, None], label="path-5")


@pytest.fixture
def interval_801():
    cl = euclidean_cloud("interval", 801, 1.0)
    return cl, MeasureWeights.uniform(cl)
