import numpy as np
import pytest

from octask.runtime import TaskPool


@pytest.fixture
def pool2():
    pool = TaskPool(2)
    yield pool
    pool.wait_quiescent()
    pool.shutdown()


@pytest.fixture
def rng():
    return np.random.default_rng(20230815)
