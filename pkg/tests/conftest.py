"""Shared fixtures: vertical slits, the bundled multi-slits and seeded random pairs."""

import numpy as np
import pytest

from app.config import get_settings
from app.services.geometry import MultiSlit, vertical_slit
from app.services.verify import load_fixture, random_slit_pair


@pytest.fixture(autouse=True)
def fresh_settings():
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture
def v1():
    return vertical_slit(0.0, 1.0)


@pytest.fixture
def mirror_pair() -> MultiSlit:
    return load_fixture("mirror_pair")


@pytest.fixture
def vertical_pair() -> MultiSlit:
    return load_fixture("vertical_pair")


@pytest.fixture
def bent() -> MultiSlit:
    return load_fixture("bent_slit")


@pytest.fixture
def rng():
    return np.random.default_rng(20240501)


@pytest.fixture
def random_pairs(rng):
    return [random_slit_pair(rng) for _ in range(10)]
