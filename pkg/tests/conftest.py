import numpy as np
import pytest

from vfa.geometry import VertebraKeypoints


def make_kp(h_p, h_m, h_a, width=2.0):
    """Vertebra with a flat lower endplate at y=0 and the given heights."""
    xs = (0.0, width / 2, width)
    upper = [(x, -h) for x, h in zip(xs, (h_p, h_m, h_a))]
    lower = [(x, 0.0) for x in xs]
    return VertebraKeypoints(np.array(upper + lower, dtype=float))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def unit_rect():
    return VertebraKeypoints.from_coords([0, 0, 1, 0, 2, 0, 0, 1, 1, 1, 2, 1])


@pytest.fixture
def wedge_kp():
    return VertebraKeypoints.from_coords([0, 0, 1, 0.15, 2, 0.3, 0, 1, 1, 1, 2, 1])


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
