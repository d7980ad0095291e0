"""Shared fixtures for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from emnav.dynamics import PendulumParams
from emnav.magmodel import get_model


@pytest.fixture(scope="session")
def octomag():
    return get_model("octomag8")


@pytest.fixture(scope="session")
def navion():
    return get_model("navion3")


@pytest.fixture
def params():
    return PendulumParams()


@pytest.fixture
def rng():
    return np.random.default_rng(20260814)
