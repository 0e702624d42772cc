from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from netduality import SystemBundle

from helpers import five_state

settings.register_profile(
    "repo", deadline=None, derandomize=True, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("repo")

FIXTURES = Path(__file__).parent / "fixtures"
ACCEPTANCE_LINES = []


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.fixture
def loop_system():
    """Stabilizable five-state example with outputs (x5, x1) and target x2."""
    return SystemBundle.load(FIXTURES / "five_state_loop.txt")


@pytest.fixture
def reference_gain():
    return np.array([[12.0, -47.0, 0.0, 0.0, 59.0]])


@pytest.fixture
def five_state_matrix():
    return five_state


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
