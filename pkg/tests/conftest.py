import numpy as np
import pytest

from splatpipe.camera import DepthMap, PinholeCamera
from splatpipe.visibility import SkyProbability, ViewRecord

# lines appended by test_acceptance.py, echoed at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def cam64():
    return PinholeCamera(100.0, 100.0, 32.0, 32.0, 64, 64)


def plane_view(vid, cam, z=10.0, sky=None):
    """View of the plane z = ``z`` (world) from ``cam``; assumes identity-like orientation."""
    from oracles import Quad, ray_cast

    big = 1e4
    depth, _ = ray_cast(cam, [Quad([-big, -big, z], [2 * big, 0, 0], [0, 2 * big, 0])])
    sky = None if sky is None else SkyProbability(sky)
    return ViewRecord(vid, cam, DepthMap.from_array(depth), sky)
