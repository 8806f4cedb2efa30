import functools

import numpy as np
import pytest

from schrobridge.measures import GaussianSpec, discretize, gaussian_model
from schrobridge.sinkhorn import solve_symmetric


@functools.lru_cache(maxsize=None)
def gaussian_marginal(var=1.0, n_points=321):
    spec = GaussianSpec(0.0, var)
    return discretize(spec.model(), spec.grid(n_points))


@functools.lru_cache(maxsize=None)
def gaussian_plan(eps, var=1.0, n_points=321):
    return solve_symmetric(gaussian_marginal(var, n_points), eps)


@pytest.fixture(scope="session")
def std_normal():
    return gaussian_model(0.0, 1.0)


@pytest.fixture(scope="session")
def std_rho():
    return gaussian_marginal()


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)
