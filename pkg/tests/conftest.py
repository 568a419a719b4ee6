"""Shared fixtures for the fkpplab test-suite."""

import numpy as np
import pytest

from fkpplab.exact import compute_stationary_qgt1, stationary_q1
from fkpplab.model import Grid1D, ModelParams, Profile
from fkpplab.pde import SolverConfig


@pytest.fixture
def cubic_linear():
    """p = 3, q = 1."""
    return ModelParams(3.0, 1.0)


@pytest.fixture
def cubic_quadratic():
    """p = 3, q = 2, where the stationary profile is 6 / (x^2 + 4.5)."""
    return ModelParams(3.0, 2.0)


@pytest.fixture
def small_grid():
    return Grid1D(20.0, 401)


@pytest.fixture(scope="session")
def q1_base():
    return stationary_q1(0.0, 3.0, Grid1D(30.0, 3001))


@pytest.fixture(scope="session")
def q2_base():
    return compute_stationary_qgt1(3.0, 2.0, Grid1D(60.0, 6001))


@pytest.fixture
def fast_solver():
    return SolverConfig(dt0=1e-2, sigma=0.05, t_max=20.0, snapshot_dt=0.5)


@pytest.fixture
def gaussian():
    """Factory for amplitude * exp(-x^2) on a grid."""

    def make(grid: Grid1D, amplitude: float) -> Profile:
        return Profile.from_function(grid, lambda x: amplitude * np.exp(-x ** 2))

    return make


@pytest.fixture
def write_config(tmp_path):
    """Write configuration text to a file and return its path as a string."""

    def write(text: str, name: str = "experiment.cfg") -> str:
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return str(path)

    return write
