import pytest
from hypothesis import settings

from dipolar_gs.minimizer import minimize
from dipolar_gs.params import ModelParams, derive_geometry

settings.register_profile("default", deadline=None, max_examples=25, derandomize=True)
settings.load_profile("default")

D0_TEMPLATE = ModelParams(-1.0, -0.05, -1.0, 3.0, 1.0)
SCALAR = ModelParams(0.0, 0.0, -1.0, 3.0, 1.0)

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_log():
    return _ACCEPTANCE_LINES


@pytest.fixture(scope="session")
def d0_template():
    return D0_TEMPLATE


@pytest.fixture(scope="session")
def d0_half():
    """The D0 example instance at half the threshold mass."""
    c_star = derive_geometry(D0_TEMPLATE).c_star
    params = D0_TEMPLATE.with_mass(c_star / 2)
    return params, derive_geometry(params)


@pytest.fixture(scope="session")
def scalar_geometry():
    return SCALAR, derive_geometry(SCALAR)


@pytest.fixture(scope="session")
def scalar_ground(scalar_geometry):
    params, geometry = scalar_geometry
    return minimize(params, geometry=geometry)


@pytest.fixture(scope="session")
def d0_ground(d0_half):
    params, geometry = d0_half
    return minimize(params, geometry=geometry)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)

