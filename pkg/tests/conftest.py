import math

import numpy as np
import pytest
from scipy.special import erfc


def qfunc(x):
    return 0.5 * erfc(np.asarray(x) / math.sqrt(2))


def mc_tolerance(p, n, k=3.0):
    """k standard deviations of a binomial proportion estimate."""
    return k * math.sqrt(p * (1 - p) / n)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
