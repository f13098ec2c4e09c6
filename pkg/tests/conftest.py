import numpy as np
import pytest

from slfpca.bspline import build_basis
from slfpca.dataset import BinaryFunctionalDataset, build_design


@pytest.fixture(scope="session")
def basis():
    return build_basis(10.0, 9, 3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_dataset(rng, n=6, m=(3, 9), T=10.0):
    subjects = []
    for _ in range(n):
        k = int(rng.integers(m[0], m[1] + 1))
        subjects.append((np.sort(rng.uniform(0, T, k)), rng.integers(0, 2, k)))
    return BinaryFunctionalDataset.from_subjects(subjects, T)


@pytest.fixture
def small_data(rng):
    return random_dataset(rng)


@pytest.fixture
def small_design(small_data, basis):
    return build_design(small_data, basis)
