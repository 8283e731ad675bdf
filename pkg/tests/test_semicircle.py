import math

import numpy as np
import pytest

from circstab.errors import InsufficientTrace
from circstab.profiles import Constant, ProblemSetup, TanhShear, TaylorCouette
from circstab.rayleigh_bvp import Mode, solve_side
from circstab.semicircle import (bound, combined_range, side_integrands, verify_identities,
                                 verify_mode)


def two_phase(plus, minus, rho_minus=0.5, alpha=1.0):
    return ProblemSetup(rho_plus=1.0, rho_minus=rho_minus, alpha=alpha, r_in=0.2, r_out=3.0,
                        profile_plus=plus, profile_minus=minus)


def test_bound_union_of_ranges():
    plus = TanhShear(base=0.5, amplitude=0.5, center=-0.8, width=0.05)
    minus = TanhShear(base=0.5, amplitude=0.3, center=0.5, width=0.05)
    rep = bound(two_phase(plus, minus), 2)
    assert rep.m == pytest.approx(0.0, abs=1e-12) and rep.M == pytest.approx(1.0, abs=1e-12)
    assert rep.center == pytest.approx(0.5) and rep.radius == pytest.approx(0.5)


def test_condition_with_zero_minimum():
    s = two_phase(Constant(B=0.0), Constant(B=1.0))
    assert bound(s, 2).condition_strict
    assert not bound(s, 1).condition_strict
    assert not bound(s.with_(alpha=0.0), 2).condition_strict


def test_condition_equal_densities():
    s = two_phase(Constant(B=0.5), Constant(B=1.0), rho_minus=1.0)
    assert bound(s, 2).condition_strict
    assert not bound(s, 1).condition_strict


def test_vortex_identities(vortex):
    d = verify_mode(vortex, Mode(2, 0.5 + 0.5j))
    assert d.imaginary <= 1e-6 and d.real <= 1e-6
    assert d.min_X >= -1e-12


def test_negative_control(vortex):
    d = verify_mode(vortex, Mode(2, 0.45 + 0.55j))
    assert max(d) > 1e-3


def test_outer_side_ignored_without_density(vortex):
    plus = solve_side(vortex, "plus", Mode(2, 0.5 + 0.5j), trace_min=1024)
    assert verify_identities(vortex, Mode(2, 0.5 + 0.5j), (plus, None)).real <= 1e-6


def test_insufficient_trace(vortex):
    plus = solve_side(vortex, "plus", Mode(2, 0.5 + 0.5j), trace_min=16)
    short = type(plus)(**{**plus.__dict__, "s": plus.s[:100], "zeta": plus.zeta[:100],
                          "zeta_dot": plus.zeta_dot[:100]})
    with pytest.raises(InsufficientTrace):
        verify_identities(vortex, Mode(2, 0.5 + 0.5j), (short, None))


def test_X_nonnegative_and_positive_mass(wind):
    for side in ("plus", "minus"):
        sol = solve_side(wind, side, Mode(3, 0.9 + 0.2j))
        _, _, X = side_integrands(wind, sol)
        assert np.min(X) >= -1e-12
        assert np.trapezoid(X, sol.s) > 0


def test_combined_range(wind):
    m, M = combined_range(wind)
    lo, hi = wind.profile_minus.value_range()
    assert (m, M) == (min(0.0, lo), max(0.0, hi))
