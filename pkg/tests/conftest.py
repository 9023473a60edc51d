import numpy as np
import pytest

from polytraverse import BoundedRegion, make_network


@pytest.fixture
def identity_net():
    """Two ReLUs on the coordinate axes; output is their sum."""
    return make_network([([[1, 0], [0, 1]], [0, 0])], ([[1, 1]], [0]))


@pytest.fixture
def two_level_net():
    """ReLU(x1) feeding a second layer with threshold 0.5."""
    return make_network([([[1, 0]], [0]), ([[1]], [-0.5])], ([[1]], [0]))


@pytest.fixture
def two_output_net():
    """o1 = ReLU(x1), o2 = 0.5."""
    return make_network([([[1, 0]], [0])], ([[1], [0]], [0, 0.5]))


@pytest.fixture
def unit_box():
    return BoundedRegion.box([-1, -1], [1, 1])


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
