"""Shared fixtures for the sigma2lab test suite."""

import numpy as np
import pytest

from sigma2lab.config.settings import Settings
from sigma2lab.schemas.grid_schemas import GridFunction


@pytest.fixture
def settings() -> Settings:
    """Fresh settings with the built-in defaults."""
    return Settings()


@pytest.fixture
def quadratic():
    """Factory for |x|^2/2 sampled on a centered grid."""

    def build(n: int = 3, m: int = 9, radius: float = 1.0) -> GridFunction:
        return GridFunction.from_callable(lambda x: 0.5 * np.sum(x * x, axis=-1), n, m, radius)

    return build


@pytest.fixture
def constant_grid():
    def build(c: float = 1.0, n: int = 3, m: int = 9, radius: float = 1.0) -> GridFunction:
        return GridFunction.centered(n, m, radius, np.full(m ** n, c))

    return build


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
