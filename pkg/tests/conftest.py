import math

import pytest

from impulsive_duffing import Forcing, ImpulseSchedule, ImpulsiveSystem, make_linear, make_semilinear
from impulsive_duffing.twist import tau_scan

T1 = math.pi / 2


@pytest.fixture(scope="session")
def linear():
    return ImpulsiveSystem(make_linear(), None, ImpulseSchedule(T1))


@pytest.fixture(scope="session")
def semilinear_g():
    return make_semilinear()


@pytest.fixture(scope="session")
def semilinear(semilinear_g):
    return ImpulsiveSystem(semilinear_g, None, ImpulseSchedule(T1))


@pytest.fixture(scope="session")
def semilinear_forced(semilinear):
    return semilinear.with_forcing(Forcing(0.0, (0.1,)))


@pytest.fixture(scope="session")
def annuli_m2(semilinear_g):
    return tau_scan(semilinear_g, 1e2, 1e6, 200, (2,))
