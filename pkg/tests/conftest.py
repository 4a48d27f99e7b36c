import numpy as np
import pytest

from icudo.designs import OrthogonalArray

# OA(9,4,3,2) as printed column-wise; rows are the transpose
EQ_OA9 = np.array([
    [1, 1, 1, 2, 2, 2, 3, 3, 3],
    [1, 2, 3, 1, 2, 3, 1, 2, 3],
    [1, 2, 3, 2, 3, 1, 3, 1, 2],
    [1, 2, 3, 3, 1, 2, 2, 3, 1],
]).T


@pytest.fixture
def oa9():
    return OrthogonalArray(EQ_OA9, L=3, t=2, lam=1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
