from __future__ import annotations

import numpy as np
import pytest

from netform.grid import Grid, ScalarField, VectorField


def smooth_random_profile(rng: np.random.Generator, modes: int = 4):
    """Random smooth function of ``x`` built from a few sine modes plus an offset."""
    amp = rng.normal(size=modes) / np.arange(1, modes + 1)
    phase = rng.uniform(0, 2 * np.pi, size=modes)
    offset = rng.normal()

    def fn(x):
        k = np.arange(1, modes + 1)[:, None]
        return offset + np.sum(amp[:, None] * np.sin(np.pi * k * x.ravel()[None, :] + phase[:, None]), axis=0).reshape(x.shape)

    return fn


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


@pytest.fixture
def grid1d():
    return Grid.uniform(1, 63)


@pytest.fixture
def grid2d():
    return Grid.uniform(2, 23)


def random_dirichlet_scalar(grid: Grid, rng: np.random.Generator) -> ScalarField:
    return ScalarField.dirichlet(grid, rng.normal(size=grid.shape))


def random_dirichlet_vector(grid: Grid, rng: np.random.Generator) -> VectorField:
    return VectorField.dirichlet(grid, rng.normal(size=(grid.dim,) + grid.shape))


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
