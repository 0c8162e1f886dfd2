import numpy as np
import pytest

from helpers import ACCEPTANCE_LINES
from rbnn.core import Box, FixedCoeff, PressureRelease, Rayleigh, Waveguide


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def seabed():
    return Rayleigh(1.5, 0.9, 0.001)


@pytest.fixture
def waveguide(seabed):
    return Waveguide(30.0, 1541.0, PressureRelease(), seabed)


@pytest.fixture
def tank():
    return Box.tank((2.5, 1.2, 0.8), 1505.0, Rayleigh(1.5, 0.9, 0.0))


@pytest.fixture
def absorbing_waveguide():
    return Waveguide(30.0, 1500.0, PressureRelease(), FixedCoeff(0.0))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
