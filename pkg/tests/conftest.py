import numpy as np
import pytest

from idim.datasets import gaussmix, hypercube, swissroll


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def line3():
    """1-d points 0, 1 and 3."""
    return np.array([[0.0], [1.0], [3.0]])


@pytest.fixture
def duplicated_rows():
    return np.array(
        [[1, 2, 3], [1, 2, 3], [1, 4, 3], [1, 4, 3], [1, 4, 5]], dtype=float
    )


@pytest.fixture(scope="session")
def swiss1000():
    return swissroll(1000, seed=7)


@pytest.fixture(scope="session")
def cube500():
    return hypercube(500, seed=7)


@pytest.fixture(scope="session")
def gaussmix_data():
    return gaussmix(500, seed=11)
