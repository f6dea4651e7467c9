import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from rmplate.geometry import make_disk_mesh, make_rect_mesh, refine
from rmplate.material import LameField, isotropic_plate

settings.register_profile(
    "rmplate", deadline=None, max_examples=25, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "rmplate"))


@pytest.fixture(scope="session")
def unit_square():
    """Unit square centred at the origin, 32 triangles."""
    return make_rect_mesh(0.5, 0.5, 2)


@pytest.fixture(scope="session")
def square1(unit_square):
    return refine(unit_square, 1)


@pytest.fixture(scope="session")
def square2(unit_square):
    return refine(unit_square, 2)


@pytest.fixture(scope="session")
def iso():
    return isotropic_plate(LameField.uniform(1.0, 1.0), 0.1)


@pytest.fixture(scope="session")
def unit_disk():
    return make_disk_mesh((0.0, 0.0), 1.0, [0.5, 1.0], 16, 1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        ok, detail = RESULTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
