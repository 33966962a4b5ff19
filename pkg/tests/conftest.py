import numpy as np
import pytest

from sbmimo.bench import TOY_H, TOY_Y


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def toy():
    return TOY_H.copy(), TOY_Y.copy()
