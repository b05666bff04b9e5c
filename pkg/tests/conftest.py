import numpy as np
import pytest

from cascade2d.grid import Grid
from cascade2d.mollifier import make_bump_mollifier
from cascade2d.synth import GenSpec, band_limited_random, generate

ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


@pytest.fixture(scope="session")
def g32():
    return Grid.of(32)


@pytest.fixture(scope="session")
def g64():
    return Grid.of(64)


@pytest.fixture(scope="session")
def g128():
    return Grid.of(128)


@pytest.fixture(scope="session")
def moll():
    return make_bump_mollifier()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def smooth_field(grid, seed=0, kmax=6, amplitude=1.0):
    return band_limited_random(grid, kmax, seed, amplitude)


def rough_field(grid, seed=0, s=0.0):
    return generate(GenSpec("besov_random", {"s": s}, seed=seed), grid)


def eps_for(grid, m, cells):
    """Filter scale whose support radius spans ``cells`` grid spacings."""
    return cells * grid.dx / m.support_radius
