import math

import pytest

from circstab.profiles import Constant, ProblemSetup, TanhShear, TaylorCouette

SQRT15 = math.sqrt(1.5)


def vortex_setup(B=1.0, alpha=0.0):
    """Constant-vorticity disk in vacuum."""
    return ProblemSetup(rho_plus=1.0, rho_minus=0.0, alpha=alpha, r_in=0.0, r_out=math.inf,
                        profile_plus=Constant(B=B), profile_minus=Constant(B=0.0))


def wind_setup(eps=1e-3, **wind):
    """Still water disk (c_+ = sqrt(1.5) at k = 2) under a tanh wind crossing it once."""
    params = dict(base=0.5, amplitude=0.9516, center=0.4, width=0.2)
    params.update(wind)
    return ProblemSetup(rho_plus=1.0, rho_minus=eps, alpha=1.0, r_in=0.0, r_out=math.e,
                        profile_plus=TaylorCouette(A=0.0, B=0.0),
                        profile_minus=TanhShear(**params))


@pytest.fixture
def vortex():
    return vortex_setup()


@pytest.fixture(scope="session")
def wind():
    return wind_setup()
