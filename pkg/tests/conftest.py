import numpy as np
import pytest

from nsblowup.fields import make_time_ladder
from nsblowup.heat_forced import ForcingProfile, HeatSolution, Variant
from nsblowup.potential_riesz import PressureField, VelocityField

# reference values from independent oracles (see tests/golden.md)
H1_A_ORIGIN_HALF = 0.21442534091705195
H1_A_HALF_NINE = 0.32015859788931088
H1_A_ORIGIN_NINE = 0.5105860695913461
C_STAR = 0.047530069258320276
NEWTON_A_ORIGIN_HALF = 0.1213665236221352
PRESSURE_A_100_HALF = 0.19878916639883082
FB_L32_T0 = 0.883531431104786


@pytest.fixture(scope="session")
def heat_a():
    return HeatSolution(ForcingProfile(Variant.CRITICAL_A))


@pytest.fixture(scope="session")
def heat_b():
    from nsblowup.stokes_picard import heat_b
    return heat_b()


@pytest.fixture(scope="session")
def vel_a(heat_a):
    return VelocityField(heat_a)


@pytest.fixture(scope="session")
def vel_b(heat_b):
    return VelocityField(heat_b)


@pytest.fixture(scope="session")
def pres_b(heat_b):
    return PressureField(heat_b)


@pytest.fixture(scope="session")
def ladder12():
    return make_time_ladder(1.0, 12)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one summary line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
