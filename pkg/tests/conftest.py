import numpy as np
import pytest

from dcsrd.model import PairSpec, SparseSpec


@pytest.fixture
def sparse_innovation():
    """Strong common part, weak innovations: N=512, K_C=K_I=8, M=128."""
    return PairSpec(512, 8, 8, 8, var_c=1.0, var_i1=0.01, var_i2=0.01)


@pytest.fixture
def dense_common():
    return PairSpec(1024, 16, 8, 8)


@pytest.fixture
def single16():
    return SparseSpec(512, 16)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
