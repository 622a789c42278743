import functools

import numpy as np
import pytest
from hypothesis import settings

from crebound.fem import assemble_solve
from crebound.fixtures import get_fixture

settings.register_profile("default", max_examples=25, deadline=None)
settings.load_profile("default")


@functools.lru_cache(maxsize=None)
def solved(name, **options):
    """FE solution of a fixture, shared across test modules."""
    fx = get_fixture(name, **options)
    return assemble_solve(fx.mesh, fx.material, fx.loads)


@pytest.fixture(scope="session")
def shear():
    return solved("shear_pair")


@pytest.fixture(scope="session")
def uniaxial():
    return solved("patch_test")


@pytest.fixture(scope="session")
def cantilever():
    return solved("cantilever_sensor")


@pytest.fixture(scope="session")
def plate():
    return solved("plate_with_hole_quarter")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


#: one ``(number, verdict, detail)`` line per acceptance criterion
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
