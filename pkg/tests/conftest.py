import numpy as np
import pytest


def qpair_zbar(p, w1p=0.766, w2=0.766, alpha=8.0):
    """Closed-form reduced excess demand of the two-trader quasilinear economy."""
    p = np.asarray(p, dtype=float)
    return w1p / p - p ** (-alpha / (alpha + 1)) + p ** (-1 / (alpha + 1)) - w2


def qpair_dzbar(p, w1p=0.766, alpha=8.0):
    a = alpha / (alpha + 1)
    b = 1 / (alpha + 1)
    return -w1p / p**2 + a * p ** (-a - 1) - b * p ** (-b - 1)


def qpair_d2zbar(p, w1p=0.766, alpha=8.0):
    a = alpha / (alpha + 1)
    b = 1 / (alpha + 1)
    return 2 * w1p / p**3 - a * (a + 1) * p ** (-a - 2) + b * (b + 1) * p ** (-b - 2)


@pytest.fixture
def rng():
    return np.random.default_rng(20261019)
