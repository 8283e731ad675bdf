"""Interface dispersion residual, closed-form relations and small-density data."""

from dataclasses import dataclass
import math

import numpy as np
from scipy.optimize import brentq

from .errors import (BadParams, NoComplexPair, NoSolution, StableBranchMissing)
from .profiles import Constant, PiecewiseOuter, TaylorCouette
from .rayleigh_bvp import Mode, shoot_interface

ACCEPT_REL = 1e-9
FD_STEP = 1e-6


def acceptance_scale(setup, k):
    w_p = float(setup.profile_plus.w(0.0))
    w_m = float(setup.profile_minus.w(0.0))
    return (abs(setup.alpha) * k * k + setup.rho_plus * (1 + w_p ** 2)
            + setup.rho_minus * (1 + w_m ** 2))


def _interface_data(profile):
    w, w1, _, _ = profile.derivatives(0.0)
    w = float(w)
    return w, 2 * w + float(w1)


def _assemble(setup, k, c, zp_plus, zp_minus):
    """Residual from interface derivatives; ``zp_minus`` ignored when rho_minus = 0."""
    w_p, v_p = _interface_data(setup.profile_plus)
    value = (setup.alpha * (k * k - 1) - setup.rho_plus * w_p ** 2
             - setup.rho_plus * (zp_plus * (w_p - c) ** 2 - v_p * (w_p - c)))
    if setup.rho_minus:
        w_m, v_m = _interface_data(setup.profile_minus)
        value = value + setup.rho_minus * w_m ** 2 + setup.rho_minus * (
            zp_minus * (w_m - c) ** 2 - v_m * (w_m - c))
    return value


@dataclass(frozen=True)
class DispersionResidual:
    mode: Mode
    value: complex
    zeta_prime_plus: complex
    zeta_prime_minus: complex
    scale: float
    derivative_estimate: complex = None

    @property
    def accepted(self):
        return abs(self.value) <= ACCEPT_REL * self.scale


def residual_values(setup, k, c):
    """Vectorised residual D(c) over an array of phase speeds."""
    c = np.asarray(c, dtype=complex)
    y0p, y1p = shoot_interface(setup, "plus", k, c)
    zp = y1p / y0p
    if setup.rho_minus:
        y0m, y1m = shoot_interface(setup, "minus", k, c)
        zm = y1m / y0m
    else:
        zm = np.zeros_like(c)
    return _assemble(setup, k, c, zp, zm), zp, zm


def pole_free_values(setup, k, c, *, with_norm=False):
    """``D(c)`` multiplied by the unnormalised interface values of both shots.

    The shooting values ``y(0)`` are entire in ``c`` off the singular set, so
    this product has the zeros of ``D`` but none of the poles coming from
    fixed-wall eigenvalues; it is what contour integrals wind around. With
    ``with_norm`` the product of interface values is returned as well, so
    that ``D = values / norm``.
    """
    c = np.asarray(c, dtype=complex)
    y0p, y1p = shoot_interface(setup, "plus", k, c)
    w_p, v_p = _interface_data(setup.profile_plus)
    plus_const = setup.alpha * (k * k - 1) - setup.rho_plus * w_p ** 2
    if setup.rho_minus:
        w_m, v_m = _interface_data(setup.profile_minus)
        y0m, y1m = shoot_interface(setup, "minus", k, c)
        const = plus_const + setup.rho_minus * w_m ** 2
        vals = (const * y0p * y0m
                - setup.rho_plus * (y1p * (w_p - c) ** 2 - v_p * (w_p - c) * y0p) * y0m
                + setup.rho_minus * (y1m * (w_m - c) ** 2 - v_m * (w_m - c) * y0m) * y0p)
        norm = y0p * y0m
    else:
        vals = plus_const * y0p - setup.rho_plus * (y1p * (w_p - c) ** 2 - v_p * (w_p - c) * y0p)
        norm = y0p
    return (vals, norm) if with_norm else vals


def derivative(setup, mode):
    """dD/dc by a central difference along the real direction."""
    h = FD_STEP * (1 + abs(mode.c))
    d, _, _ = residual_values(setup, mode.k, np.array([mode.c + h, mode.c - h]))
    return complex((d[0] - d[1]) / (2 * h))


def residual(setup, mode, *, with_derivative=False):
    d, zp, zm = residual_values(setup, mode.k, np.array([mode.c]))
    der = derivative(setup, mode) if with_derivative else None
    return DispersionResidual(
        mode=mode,
        value=complex(d[0]),
        zeta_prime_plus=complex(zp[0]),
        zeta_prime_minus=complex(zm[0]),
        scale=acceptance_scale(setup, mode.k),
        derivative_estimate=der,
    )


# closed-form relations ---------------------------------------------------

def _ratio(r, k):
    """(1 - r^{2|k|}) / (|k| (1 + r^{2|k|})) for an inner radius r in [0, 1)."""
    p = r ** (2 * abs(k))
    return (1 - p) / (abs(k) * (1 + p))


def _outer_coth(r_out, k):
    """(1 + R^{2|k|}) / (R^{2|k|} - 1), with the limit 1 for R = inf."""
    if math.isinf(r_out):
        return 1.0
    p = r_out ** (-2 * abs(k))
    return (1 + p) / (1 - p)


def _need(params, *names):
    missing = [n for n in names if n not in params]
    if missing:
        raise BadParams(f"missing parameters: {', '.join(missing)}")
    k = params.get("k")
    if k is not None and (int(k) != k or k == 0):
        raise BadParams("k must be a nonzero integer")


def _constant_vortex(p, c):
    _need(p, "k")
    ak = abs(p["k"])
    return (c - (1 - 1 / ak)) ** 2 + (1 / ak) * (1 - 1 / ak)


def _capillary_constant(p, c):
    _need(p, "k", "alpha", "B")
    ak = abs(p["k"])
    a = p["alpha"] / p.get("rho_plus", 1.0)
    B = p["B"]
    return (c - B * (1 - 1 / ak)) ** 2 - (ak - 1) / ak ** 2 * (a * ak * (ak + 1) - B ** 2)


def _tc_water_wave(p, c):
    _need(p, "k", "alpha", "A", "B", "r_in")
    k = p["k"]
    F = _ratio(p["r_in"], k)
    A, B = p["A"], p["B"]
    a = p["alpha"] / p.get("rho_plus", 1.0)
    lhs = (1 / F) * (c - (A + B - F * B)) ** 2
    rhs = a * (k * k - 1) + F * B ** 2 - (A + B) ** 2
    return lhs - rhs


def two_phase_tc_terms(p):
    """(G, center, rhs) of the two-phase Taylor-Couette relation G (c - center)^2 = rhs."""
    _need(p, "k", "alpha", "A", "B", "a", "b", "r_in", "r_out", "epsilon")
    k = p["k"]
    ak = abs(k)
    A, B, a, b, eps = p["A"], p["B"], p["a"], p["b"], p["epsilon"]
    gi = 1 / _ratio(p["r_in"], k) / ak          # (1 + Rin^2k)/(1 - Rin^2k)
    go = _outer_coth(p["r_out"], k)
    G = ak * (gi + eps * go)
    num = ak * gi * (A + B) - B + eps * ak * go * (a + b) + eps * b
    rhs = (p["alpha"] / p.get("rho_plus", 1.0) * (k * k - 1) + num ** 2 / G
           + (B ** 2 - A ** 2) - ak * gi * (A + B) ** 2
           + eps * (a ** 2 - b ** 2) - ak * eps * go * (a + b) ** 2)
    return G, num / G, rhs


def two_phase_tc_boxed_rhs(p):
    """Simplified right-hand side for A = a = 0, B = b (disk inside unbounded exterior)."""
    _need(p, "k", "alpha", "b", "epsilon")
    k, b, eps = p["k"], p["b"], p["epsilon"]
    return (p["alpha"] / p.get("rho_plus", 1.0) * (k * k - 1)
            - b ** 2 * (1 - eps) * (1 - (1 - eps) / (abs(k) * (1 + eps))))


def _two_phase_tc(p, c):
    G, center, rhs = two_phase_tc_terms(p)
    return G * (c - center) ** 2 - rhs


def lipschitz_gammas(p):
    """(gamma_1, gamma_2) in the closed-form outer derivative -|k|(c-g1)/(c-g2)."""
    _need(p, "k", "omega_star", "b", "s_star")
    ak = abs(p["k"])
    om, b, ss = p["omega_star"], p["b"], p["s_star"]
    w_star = om * (1 - math.exp(-2 * ss)) + b * math.exp(-2 * ss)
    e = math.exp(-2 * ak * ss)
    return w_star - om / ak * (1 + e), w_star - om / ak * (1 - e)


def _lipschitz_outer(p, c):
    _need(p, "k", "alpha", "B", "omega_star", "b", "s_star", "epsilon")
    ak = abs(p["k"])
    B, b, om, eps = p["B"], p["b"], p["omega_star"], p["epsilon"]
    a = p["alpha"] / p.get("rho_plus", 1.0)
    g1, g2 = lipschitz_gammas(p)
    return (ak * (c - (1 - 1 / ak) * B) ** 2 - (1 - 1 / ak) * (a * ak * (ak + 1) - B ** 2)
            + eps * (ak * (c - g1) / (c - g2) * (c - b) ** 2 - 2 * om * (c - b) - b ** 2))


ORACLES = {
    "ConstantVortex": _constant_vortex,
    "CapillaryConstant": _capillary_constant,
    "TCWaterWave": _tc_water_wave,
    "TwoPhaseTC": _two_phase_tc,
    "LipschitzOuter": _lipschitz_outer,
}


def oracle_dispersion(case, params, c):
    """Closed-form relation (left minus right side) for one of the worked cases."""
    try:
        fn = ORACLES[case]
    except KeyError:
        raise BadParams(f"unknown oracle case {case!r}") from None
    return fn(params, c)


def oracle_scale(case, params):
    """Factor ``f`` with ``residual = f * oracle_dispersion`` for matching setups."""
    rho = params.get("rho_plus", 1.0)
    if case in ("ConstantVortex", "CapillaryConstant"):
        return -rho * abs(params["k"])
    if case in ORACLES:
        return -rho
    raise BadParams(f"unknown oracle case {case!r}")


def oracle_setup(case, params):
    """ProblemSetup realising a closed-form case, for cross-checks."""
    from .profiles import ProblemSetup

    rho = params.get("rho_plus", 1.0)
    if case == "ConstantVortex":
        return ProblemSetup(rho_plus=rho, rho_minus=0.0, alpha=0.0, r_in=0.0,
                            r_out=math.inf, profile_plus=Constant(B=1.0),
                            profile_minus=Constant(B=0.0))
    if case == "CapillaryConstant":
        return ProblemSetup(rho_plus=rho, rho_minus=0.0, alpha=params["alpha"], r_in=0.0,
                            r_out=math.inf, profile_plus=Constant(B=params["B"]),
                            profile_minus=Constant(B=0.0))
    if case == "TCWaterWave":
        return ProblemSetup(rho_plus=rho, rho_minus=0.0, alpha=params["alpha"],
                            r_in=params["r_in"], r_out=math.inf,
                            profile_plus=TaylorCouette(A=params["A"], B=params["B"]),
                            profile_minus=Constant(B=0.0))
    if case == "TwoPhaseTC":
        return ProblemSetup(rho_plus=rho, rho_minus=rho * params["epsilon"],
                            alpha=params["alpha"], r_in=params["r_in"],
                            r_out=params["r_out"],
                            profile_plus=TaylorCouette(A=params["A"], B=params["B"]),
                            profile_minus=TaylorCouette(A=params["a"], B=params["b"]))
    if case == "LipschitzOuter":
        return ProblemSetup(rho_plus=rho, rho_minus=rho * params["epsilon"],
                            alpha=params["alpha"], r_in=0.0, r_out=math.inf,
                            profile_plus=Constant(B=params["B"]),
                            profile_minus=PiecewiseOuter(omega_star=params["omega_star"],
                                                         b=params["b"],
                                                         s_star=params["s_star"]))
    raise BadParams(f"unknown oracle case {case!r}")


# small density ratio -----------------------------------------------------

@dataclass(frozen=True)
class SmallDensityExpansion:
    k: int
    c_plus_k: float
    c_minus_k: float
    h_R_0: tuple
    h_I_0: tuple
    discriminant: float
    center: float
    G: float

    def branch(self, sign):
        return self.c_plus_k if sign > 0 else self.c_minus_k

    def h_I(self, sign):
        return self.h_I_0[0] if sign > 0 else self.h_I_0[1]


def _inner_tc(setup):
    prof = setup.profile_plus
    if isinstance(prof, TaylorCouette):
        return prof.A, prof.B
    if isinstance(prof, Constant):
        return 0.0, prof.B
    raise BadParams("small-density data need a Taylor-Couette or constant inner flow")


def small_density_expansion(setup, k):
    """Water-vacuum speeds and the leading coefficients of their perturbation."""
    A, B = _inner_tc(setup)
    F = _ratio(setup.r_in, k)
    center = A + B - F * B
    disc = setup.alpha / setup.rho_plus * (k * k - 1) + F * B ** 2 - (A + B) ** 2
    if not disc > 0:
        raise StableBranchMissing(f"discriminant {disc:.6g} is not positive")
    root = math.sqrt(F * disc)
    cp, cm = center + root, center - root
    w0 = float(setup.profile_minus.w(0.0))
    G = 1 / F
    hI = tuple((c - w0) ** 2 / (2 * G * (c - center)) for c in (cp, cm))
    return SmallDensityExpansion(k=int(k), c_plus_k=cp, c_minus_k=cm, h_R_0=(cp, cm),
                                 h_I_0=hI, discriminant=disc, center=center, G=G)


def quadratic_coefficients(setup, k, zeta_minus):
    """Coefficients (c^2, c, 1) of D(c) = 0 for a Taylor-Couette inner flow and a
    prescribed outer interface derivative ``zeta_minus``."""
    A, B = _inner_tc(setup)
    G = 1 / _ratio(setup.r_in, k)
    rp, rm = setup.rho_plus, setup.rho_minus
    u, vp = _interface_data(setup.profile_plus)
    v, vm = _interface_data(setup.profile_minus)
    Z = zeta_minus
    return (
        -rp * G + rm * Z,
        2 * rp * G * u - rp * vp - 2 * rm * Z * v + rm * vm,
        (setup.alpha * (k * k - 1) - rp * u ** 2 + rm * v ** 2 - rp * G * u ** 2
         + rp * vp * u + rm * Z * v ** 2 - rm * vm * v),
    )


def branch_root(setup, k, zeta_minus, near):
    """Root of the two-root relation nearest ``near`` (branch continuity)."""
    a, b, c0 = quadratic_coefficients(setup, k, zeta_minus)
    disc = np.sqrt(complex(b * b - 4 * a * c0))
    # numerically stable pair
    q = -0.5 * (b + (disc if (np.conj(b) * disc).real >= 0 else -disc))
    roots = [q / a, c0 / q] if q != 0 else [-b / (2 * a)] * 2
    return min(roots, key=lambda r: abs(r - near))


# piecewise outer example -------------------------------------------------

def lipschitz_lambdas(p):
    _need(p, "k", "alpha", "B")
    ak = abs(p["k"])
    a = p["alpha"] / p.get("rho_plus", 1.0)
    B = p["B"]
    inner = (ak - 1) / ak ** 2 * (a * ak * (ak + 1) - B ** 2)
    if inner <= 0:
        raise BadParams("B^2 must be below (alpha/rho_plus)|k|(|k|+1)")
    r = math.sqrt(inner)
    base = (1 - 1 / ak) * B
    return base - r, base + r


def _check_lipschitz(p):
    _need(p, "k", "alpha", "B", "omega_star", "b", "s_star")
    if abs(p["k"]) < 2:
        raise BadParams("the piecewise-outer example needs |k| >= 2")
    lm, lp = lipschitz_lambdas(p)
    if abs(p["b"] - lp) < 1e-12:
        raise BadParams("b coincides with lambda_plus")
    return lm, lp


def lipschitz_cubic(p, eps):
    """Coefficients (highest first) of the cubic whose roots solve the relation.

    Uses gamma_2 itself in the factor that cancels the pole, so it is the
    polynomial form of the relation for any s*; after calibration
    gamma_2 = lambda_plus and it reduces to the textbook cubic.
    """
    lm, lp = _check_lipschitz(p)
    g1, g2 = lipschitz_gammas(p)
    ak = abs(p["k"])
    om, b = p["omega_star"], p["b"]
    P = np.polynomial.Polynomial
    x = P([0.0, 1.0])
    base = (x - lm) * (x - lp) * (x - g2)
    pert = (x - g1) * (x - b) ** 2 - 2 * om / ak * (x - b) * (x - g2) - b ** 2 / ak * (x - g2)
    return (base + eps * pert).coef[::-1]


def lipschitz_case_roots(p, eps, *, min_imag=1e-7):
    """Conjugate pair of complex roots near lambda_plus (upper root first).

    A double real root splits by about sqrt(machine epsilon) under rounding,
    so imaginary parts below ``min_imag`` count as real.
    """
    coef = lipschitz_cubic(p, eps)
    roots = np.roots(coef)
    poly = np.poly1d(coef)
    dpoly = poly.deriv()
    polished = []
    for r in roots:
        for _ in range(8):
            d = dpoly(r)
            if d == 0:
                break
            step = poly(r) / d
            r = r - step
            if abs(step) <= 1e-16 * max(1.0, abs(r)):
                break
        polished.append(complex(r))
    upper = max(polished, key=lambda z: z.imag)
    if upper.imag <= min_imag * max(1.0, abs(upper)):
        raise NoComplexPair(f"roots stayed real at eps={eps}")
    return upper, upper.conjugate()


def lipschitz_asymptotic_imag(p, eps):
    """Leading-order imaginary part sqrt(eps (g2-g1)(lp-b)^2/(lp-lm))."""
    lm, lp = lipschitz_lambdas(p)
    g1, g2 = lipschitz_gammas(p)
    return math.sqrt(eps * (g2 - g1) * (lp - p["b"]) ** 2 / (lp - lm))


def gamma2_of(p, s):
    ak = abs(p["k"])
    om, b = p["omega_star"], p["b"]
    e2 = math.exp(-2 * s)
    return (1 - 1 / ak) * om * (1 - e2) + (b * e2 - om / ak * (e2 - math.exp(-2 * ak * s)))


def calibrate_sstar(p, *, s_max=50.0, xtol=1e-12):
    """Position s* of the vorticity jump with gamma_2(s*) = target."""
    _need(p, "k", "omega_star", "b", "target")
    target = p["target"]
    if abs(p["b"] - target) < 1e-12:
        raise BadParams("b coincides with the target speed")
    f0 = gamma2_of(p, 0.0) - target
    grid = np.linspace(0.0, s_max, 2001)[1:]
    prev_s, prev_f = 0.0, f0
    for s in grid:
        f = gamma2_of(p, s) - target
        if f == 0.0:
            return float(s)
        if np.sign(f) != np.sign(prev_f):
            return brentq(lambda x: gamma2_of(p, x) - target, prev_s, s,
                          xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=500)
        prev_s, prev_f = s, f
    raise NoSolution("gamma_2 never reaches the target on (0, s_max]; change omega_star or b")
