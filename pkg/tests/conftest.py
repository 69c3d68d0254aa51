import numpy as np
import pytest

from idnc.feedback import StateFeedbackMatrix

# 4 receivers x 6 packets (1 = wanted); packets are 0-based in code.
EXAMPLE = np.array(
    [
        [1, 0, 1, 0, 0, 1],
        [0, 1, 1, 1, 1, 1],
        [1, 0, 0, 0, 1, 0],
        [1, 0, 0, 1, 0, 0],
    ],
    dtype=np.uint8,
)
# 2 receivers x 4 packets
SMALL = np.array([[1, 0, 1, 1], [0, 1, 0, 1]], dtype=np.uint8)


@pytest.fixture
def example_sfm():
    return StateFeedbackMatrix(EXAMPLE)


@pytest.fixture
def small_sfm():
    return StateFeedbackMatrix(SMALL)


def random_sfm(rng, m, n, density=0.5):
    return StateFeedbackMatrix((rng.random((m, n)) < density).astype(np.uint8))


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
