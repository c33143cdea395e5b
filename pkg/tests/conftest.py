import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


def simplex(rng, n, floor=0.05):
    w = rng.random(n) + floor
    return w / w.sum()


def random_instance(rng, ns=None, nt=None, max_size=6, m_lo=0.3, m_hi=1.3, mask_density=None):
    """Random (mu, nu, cost, m, mask); every row and column keeps an admissible pair."""
    ns = ns or int(rng.integers(1, max_size + 1))
    nt = nt or int(rng.integers(1, max_size + 1))
    mu, nu = simplex(rng, ns), simplex(rng, nt)
    cost = rng.random((ns, nt))
    m = m_lo + (m_hi - m_lo) * rng.random((ns, nt))
    mask = np.ones((ns, nt), dtype=bool)
    if mask_density is not None:
        mask = rng.random((ns, nt)) < mask_density
        mask[np.arange(ns), rng.integers(0, nt, ns)] = True
        mask[rng.integers(0, ns, nt), np.arange(nt)] = True
    return mu, nu, cost, m, mask


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def two_target():
    """One source split over two targets; the unique plan is (1/3, 2/3)."""
    mu = np.array([1.0])
    nu = np.array([0.5, 0.5])
    cost = np.array([[0.0, 1.0]])
    m = np.array([[1.0, 0.5]])
    return mu, nu, cost, m
