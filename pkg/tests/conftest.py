from pathlib import Path

import numpy as np
import pytest

from pulseforge.spin_model import SpinSystem, load_system

ROOT = Path(__file__).resolve().parents[1]
FIXTURE3 = ROOT / "fixtures" / "fixture3.json"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def fixture3():
    return load_system(FIXTURE3)


@pytest.fixture
def two_spin():
    return SpinSystem.from_hz([-1500.0, 2500.0], [[0.0, 40.0], [40.0, 0.0]])


def pytest_terminal_summary(terminalreporter):
    from oracles import ACCEPTANCE_LINES

    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
