import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from s2hreg.geometry import RigidMotion


def random_rotation(rng) -> np.ndarray:
    return Rotation.random(random_state=rng.integers(2**31)).as_matrix()


def random_motion(rng, scale: float = 1.0) -> RigidMotion:
    return RigidMotion(random_rotation(rng), rng.normal(size=3) * scale)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed after the run regardless of capture
ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
