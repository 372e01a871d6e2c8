"""Shared fixtures; puts the flat modules on the import path."""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from sde_systems import BenchmarkId, make_benchmark, make_linear_system  # noqa: E402


@pytest.fixture
def double_well():
    return make_benchmark(BenchmarkId.DOUBLE_WELL_1D)


@pytest.fixture
def gradient_2d():
    return make_benchmark(BenchmarkId.GRADIENT_2D)


@pytest.fixture
def lorenz():
    return make_benchmark(BenchmarkId.LORENZ_3D)


@pytest.fixture
def zero_drift():
    """f ≡ 0 with unit noise."""
    return make_linear_system(0.0, 1.0, name="zero-drift")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
