"""Semicircle bound data and the energy identities behind it.

With ``chi = (w(0) - c) / (w - c) * zeta`` on each side and

    X = k^2 |chi|^2 + |chi'|^2 - 2 Re(chi conj(chi')),

every mode satisfies

    sum_pm rho int (R - w) X ds                 = R (rho_minus - rho_plus),
    sum_pm rho int ((w - R)^2 - I^2) X ds      = alpha (k^2 - 1) + (rho_minus - rho_plus)(R^2 - I^2),

where c = R + iI. Both integrals are evaluated by the trapezoid rule on the
integrator's step grid (refined geometrically around the points where
|w - c| is smallest, since X grows like |w - c|^-4 there) with a Richardson
correction from the half-density grid. Defects are taken relative to
sum rho int |w - c| X (imaginary identity) and sum rho int |w - c|^2 X (real
identity) plus the modulus of the right-hand side.
"""

from dataclasses import dataclass
import logging
import math

import numpy as np

from .errors import InsufficientTrace
from .rayleigh_bvp import solve_side

log = logging.getLogger(__name__)

MIN_SAMPLES = 512
X_FLOOR = -1e-12


def combined_range(setup):
    m1, M1 = setup.profile_plus.value_range()
    m2, M2 = setup.profile_minus.value_range()
    return min(m1, m2), max(M1, M2)


@dataclass(frozen=True)
class SemicircleReport:
    m: float
    M: float
    condition_strict: bool
    center: float
    radius: float
    identity_defects: tuple = None

    def contains(self, c, slack=0.0):
        """Strictly inside the disk (minus ``slack``)."""
        return (c.real - self.center) ** 2 + c.imag ** 2 < self.radius ** 2 - slack


def bound(setup, k):
    if setup.rho_plus < setup.rho_minus:
        log.warning("semicircle bound assumes rho_plus >= rho_minus")
    m, M = combined_range(setup)
    cond = setup.alpha * (k * k - 1) > m * M * (setup.rho_plus - setup.rho_minus)
    return SemicircleReport(m=m, M=M, condition_strict=bool(cond),
                            center=0.5 * (m + M), radius=0.5 * (M - m))


@dataclass(frozen=True)
class IdentityDefects:
    imaginary: float
    real: float
    min_X: float
    quadrature_error: float

    def __iter__(self):
        return iter((self.imaginary, self.real))


SUBDIV = 8
GRADING = 1.05


def _chi_X(profile, k, c, s, zeta, zeta_dot):
    w, w1, _, _ = profile.derivatives(s)
    w0 = float(profile.w(0.0))
    d = w - c
    chi = (w0 - c) / d * zeta
    chi_dot = (w0 - c) * (zeta_dot / d - w1 * zeta / d ** 2)
    # k^2|chi|^2 + |chi'|^2 - 2 Re(chi conj chi') written without cancellation
    X = np.abs(chi_dot - chi) ** 2 + (k * k - 1) * np.abs(chi) ** 2
    return w, X


def side_integrands(setup, solution):
    """(s, w, X) on the stored trace of one side."""
    profile = setup.profile(solution.side)
    w, X = _chi_X(profile, solution.mode.k, solution.mode.c, solution.s,
                  solution.zeta, solution.zeta_dot)
    return solution.s, w, X


def _cluster_points(profile, c, lo, hi, nodes):
    """Geometric grid around the points where |w - c| is smallest."""
    centers = []
    try:
        pts = profile.critical_points(c.real, floor=0.0).points
        centers += [(p.sigma, abs(p.w_dot)) for p in pts if lo < p.sigma < hi]
    except Exception:
        pass
    w, w1, _, _ = profile.derivatives(nodes)
    i = int(np.argmin(np.abs(w - c)))
    centers.append((float(nodes[i]), abs(float(w1[i]))))
    out = []
    for sigma, slope in centers:
        delta = max(1e-2 * abs(c.imag) / max(slope, 1e-12), 1e-13 * (1 + abs(sigma)))
        span = max(sigma - lo, hi - sigma)
        n = int(math.ceil(math.log(max(span / delta, 1.0)) / math.log(GRADING))) + 1
        offs = delta * GRADING ** np.arange(n)
        out.append(sigma + offs)
        out.append(sigma - offs)
        out.append(np.array([sigma]))
    pts = np.concatenate(out)
    return pts[(pts > lo) & (pts < hi)]


def _graded_grid(coarse):
    """Uniform ``SUBDIV`` split of every coarse interval."""
    a, b = coarse[:-1], coarse[1:]
    frac = np.arange(SUBDIV) / SUBDIV
    g = (a[:, None] + (b - a)[:, None] * frac[None, :]).ravel()
    return np.append(g, coarse[-1])


def _side_integrals(setup, solution):
    """Integrals of (R-w)X and ((w-R)^2-I^2)X, their scales, error and min X."""
    profile = setup.profile(solution.side)
    c = solution.mode.c
    R, I = c.real, c.imag
    k = solution.mode.k
    res = np.zeros(4)
    err = 0.0
    min_x = np.inf
    for idx, (lo, hi, sol) in enumerate(solution.pieces):
        nodes = np.unique(np.concatenate([np.sort(sol.t), _cluster_points(
            profile, c, lo, hi, np.sort(sol.t))]))
        coarse = _graded_grid(nodes)
        fine = np.sort(np.concatenate([coarse, 0.5 * (coarse[1:] + coarse[:-1])]))
        z, zd = solution.evaluate(fine, idx)
        w, X = _chi_X(profile, k, c, fine, z, zd)
        min_x = min(min_x, float(np.min(X)))
        # magnitudes use |w - c| and |w - c|^2, the integrands before the
        # real/imaginary split, so exact cancellation cannot fake a defect
        dist2 = (w - R) ** 2 + I * I
        f = np.stack([(R - w) * X, ((w - R) ** 2 - I * I) * X, np.sqrt(dist2) * X, dist2 * X])
        tf = np.trapezoid(f, fine, axis=1)
        tc = np.trapezoid(f[:, ::2], fine[::2], axis=1)
        res += tf + (tf - tc) / 3
        err = max(err, float(np.max(np.abs(tf - tc)[:2])) / 3)
    return res, err, min_x


def verify_identities(setup, mode, solutions):
    """Relative defects of both identities at ``mode``.

    ``solutions`` is the pair (plus, minus); the minus entry may be ``None``
    when rho_minus = 0.
    """
    R, I = mode.c.real, mode.c.imag
    lhs_im = lhs_re = 0.0
    mag_im = mag_re = 0.0
    min_x = np.inf
    qerr = 0.0
    for sol, rho in zip(solutions, (setup.rho_plus, setup.rho_minus)):
        if rho == 0:
            continue
        if sol is None or len(sol.s) < MIN_SAMPLES:
            raise InsufficientTrace(f"need at least {MIN_SAMPLES} trace samples per side")
        (a, b, ma, mb), e, mx = _side_integrals(setup, sol)
        lhs_im += rho * a
        lhs_re += rho * b
        mag_im += rho * ma
        mag_re += rho * mb
        min_x = min(min_x, mx)
        qerr = max(qerr, rho * e)
    drho = setup.rho_minus - setup.rho_plus
    rhs_im = R * drho
    rhs_re = setup.alpha * (mode.k ** 2 - 1) + drho * (R * R - I * I)
    d_im = abs(lhs_im - rhs_im) / max(mag_im + abs(rhs_im), 1e-300)
    d_re = abs(lhs_re - rhs_re) / max(mag_re + abs(rhs_re), 1e-300)
    if min_x < X_FLOOR:
        log.warning("X dipped to %.3g on a trace", min_x)
    return IdentityDefects(imaginary=float(d_im), real=float(d_re), min_X=float(min_x),
                          quadrature_error=float(qerr))


def verify_mode(setup, mode, *, trace_min=2048):
    """Solve both sides at ``mode`` and return the identity defects."""
    plus = solve_side(setup, "plus", mode, trace_min=trace_min)
    minus = solve_side(setup, "minus", mode, trace_min=trace_min) if setup.rho_minus else None
    return verify_identities(setup, mode, (plus, minus))
