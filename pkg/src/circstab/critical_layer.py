"""Critical-layer mechanism on the outer side.

With zeta the outer Rayleigh solution the real quantities

    xi1 = |zeta|^2,  xi2 = Re(zeta' conj zeta),  xi3 = |zeta'|^2,
    Phi = Im(zeta' conj zeta)

obey a linear 4x4 system whose only complex input is c = R + iI. As I -> 0
the Lorentzian I varpi'/|w - c|^2 concentrates on the points sigma with
w(sigma) = R and the system becomes a jump-free real system between them,
with Phi and xi3 jumping at each sigma. The limit is integrated on the
complex zeta itself: inside a window around sigma the variable
v = zeta' - p L zeta with p = varpi'/w' and L = log|w - R| removes the
logarithmic part of zeta', so only the delta part (a jump of v by
i pi sgn(I) varpi'/|w'| zeta) is left at sigma.

The same data give the predicted growth coefficient c_sharp for small
density ratios and a two-parameter Newton solve for the actual mode.
"""

from dataclasses import dataclass, field
import logging
import math

import numpy as np

from .dispersion import (branch_root, calibrate_sstar, lipschitz_case_roots,
                         lipschitz_lambdas, small_density_expansion)
from .errors import (BadParams, HypothesisViolated, IdentityDrift, LeftHalfPlane,
                     NewtonDiverged, NotRegularValue, ZeroPrediction)
from .ode import dopri
from .profiles import PiecewiseOuter
from .rayleigh_bvp import ATOL, RTOL, Mode, _layers, geometry

log = logging.getLogger(__name__)

DRIFT_TOL = 1e-6
JUMP_GAP = 1e-13
EPS_CAP = 1e-2
ACCEPT = 1e-9
FD_REL = 1e-7
MAX_NEWTON = 50
MAX_BACKTRACK = 20
ZERO_PREDICTION = 1e-12


@dataclass(frozen=True)
class CriticalLayerConfig:
    mu: float = 0.9
    delta0: float = None
    eta_grid: tuple = (1e-2, 1e-3, 1e-4)

    def __post_init__(self):
        if not 0 < self.mu < 1:
            raise BadParams("mu must lie in (0, 1)")
        if self.delta0 is not None and not self.delta0 > 0:
            raise BadParams("delta0 must be positive")
        if any(not e > 0 for e in self.eta_grid):
            raise BadParams("eta_grid entries must be positive")

    def windows(self, sigmas, s_end):
        """Half-width of the singular windows around ``sigmas``.

        The default is a quarter of the smallest gap in {0, sigma_j, s_end};
        an explicit value must keep the windows disjoint and inside (0, s_end).
        """
        if not sigmas:
            return self.delta0 or 0.0
        pts = [0.0] + sorted(sigmas) + [s_end]
        gap = min(b - a for a, b in zip(pts[:-1], pts[1:]))
        if self.delta0 is None:
            return 0.25 * gap
        if sigmas[0] - self.delta0 <= 0 or sigmas[-1] + self.delta0 >= s_end:
            raise BadParams("singular windows must lie inside (0, log r_out)")
        if 2 * self.delta0 >= min((b - a for a, b in zip(sigmas[:-1], sigmas[1:])),
                                  default=math.inf):
            raise BadParams("singular windows overlap")
        return self.delta0


@dataclass(frozen=True, eq=False)
class CriticalLayerState:
    """Trace of (xi1, xi2, xi3, Phi) on increasing s, normalised to xi1(0) = 1."""

    variant: str
    s: np.ndarray
    xi1: np.ndarray
    xi2: np.ndarray
    xi3: np.ndarray
    Phi: np.ndarray
    c: complex
    k: int
    sigmas: tuple = ()
    xi1_at_sigma: tuple = ()
    w_dot: tuple = ()
    varpi_dot: tuple = ()
    sign: int = 1
    drift: float = 0.0
    extras: dict = field(default_factory=dict)

    @property
    def phi0(self):
        return float(self.Phi[0])

    @property
    def xi2_0(self):
        return float(self.xi2[0])

    @property
    def zeta_dot_0(self):
        """Interface log-derivative zeta'(0)/zeta(0)."""
        return complex(self.xi2[0], self.Phi[0])

    def sum_formula(self):
        """-sgn(I) pi sum varpi'(sigma) xi1(sigma) / |w'(sigma)|."""
        return -self.sign * math.pi * sum(
            vd * x / abs(wd) for vd, x, wd in zip(self.varpi_dot, self.xi1_at_sigma, self.w_dot))

    def pythagorean_defect(self):
        return np.abs(self.xi2 ** 2 + self.Phi ** 2 - self.xi1 * self.xi3)


def _xi_from_zeta(z, v):
    zv = v * np.conj(z)
    return np.abs(z) ** 2, zv.real, np.abs(v) ** 2, zv.imag


def _dirac_jumps(profile, start):
    jumps = sorted((loc, wt) for loc, wt in profile.dirac_terms() if 0.0 < loc < start)
    return jumps[::-1]


# -- full system --------------------------------------------------------------

def integrate_full(setup, mode, *, rtol=RTOL, atol=ATOL, check=True):
    """Integrate the real 4-vector system on the outer side for ``mode``."""
    c = complex(mode.c)
    if c.imag == 0:
        raise BadParams("the full system needs Im c != 0")
    profile = setup.profile_minus
    k2 = float(mode.k) ** 2
    R, I = c.real, c.imag

    def rhs(s, y):
        w, w1, w2, _ = profile.derivatives(s)
        vd = 2 * w1 + w2
        d = w - R
        den = d * d + I * I
        qr = k2 + vd * d / den
        qi = I * vd / den
        x1, x2, x3, ph = y
        return np.array([2 * x2, qr * x1 + x3, 2 * qr * x2 + 2 * qi * ph, qi * x1])

    geo = geometry(setup, "minus", mode.k)
    y = np.array(_xi_from_zeta(complex(geo.data[0]), complex(geo.data[1])), dtype=float)
    breaks, near = _layers(profile, np.array([c]))
    cap = None
    if near.size:
        def cap(s):
            w, w1, _, _ = profile.derivatives(s)
            return 1e-2 * abs(float(w) - c) / max(abs(float(w1)), 1.0)

    ts, ys = [], []
    t = geo.start
    for loc, weight in _dirac_jumps(profile, t) + [(0.0, None)]:
        sol = dopri(rhs, t, loc, y, rtol=rtol, atol=atol, step_cap=cap, breakpoints=breaks)
        ts.append(sol.t)
        ys.append(sol.y)
        y = sol.y_end.copy()
        if weight is not None:
            a = -weight / (float(profile.w(loc)) - c)
            x1, x2, x3, ph = y
            y = np.array([x1, x2 + a.real * x1,
                          x3 + 2 * (a.real * x2 + a.imag * ph) + abs(a) ** 2 * x1,
                          ph + a.imag * x1])
        t = loc
    s = np.concatenate(ts)[::-1]
    Y = np.concatenate(ys)[::-1]
    Y = Y / Y[0, 0]
    x1, x2, x3, ph = Y.T
    defect = np.abs(x2 ** 2 + ph ** 2 - x1 * x3)
    drift = float(np.max(defect) / (1.0 + np.max(x1 * x3)))
    if check and drift > DRIFT_TOL:
        raise IdentityDrift(f"xi2^2 + Phi^2 - xi1 xi3 drifted to {drift:.3g}")
    return CriticalLayerState("Full", s, x1, x2, x3, ph, c, int(mode.k),
                              sign=1 if I > 0 else -1, drift=drift)


# -- limit system -------------------------------------------------------------

def _window_halfwidth(profile, sigma, w_dot, delta):
    """Shrink ``delta`` until w' stays within a factor 2 of w'(sigma)."""
    for _ in range(60):
        s = np.linspace(sigma - delta, sigma + delta, 201)
        ratio = profile.derivatives(s)[1] / w_dot
        if np.all((ratio > 0.5) & (ratio < 2.0)):
            return delta
        delta *= 0.5
    raise NotRegularValue(f"w' varies too fast near sigma={sigma}")


def integrate_limit(setup, R, sign=1, *, k, config=None, rtol=RTOL, atol=ATOL):
    """Integrate the I -> 0 limit system at real speed ``R`` with jumps at w = R."""
    config = config or CriticalLayerConfig()
    sign = 1 if sign >= 0 else -1
    profile = setup.profile_minus
    k2 = float(k) ** 2
    R = float(R)
    geo = geometry(setup, "minus", k)
    start = geo.start
    crit = profile.critical_points(R)
    pts = [p for p in crit.points if 0.0 < p.sigma < start]
    sigmas = [p.sigma for p in pts]
    s_end = setup.s_out if math.isfinite(setup.s_out) else start
    delta = config.windows(sigmas, s_end)
    halves = [_window_halfwidth(profile, p.sigma, p.w_dot, delta) for p in pts]

    def plain(s, y):
        w, w1, w2, _ = profile.derivatives(s)
        return np.array([y[1], (k2 + (2 * w1 + w2) / (w - R)) * y[0]])

    def regular(s, y):
        w, w1, w2, w3 = profile.derivatives(s)
        vd = 2 * w1 + w2
        vdd = 2 * w2 + w3
        p = vd / w1
        dp = (vdd * w1 - vd * w2) / w1 ** 2
        L = math.log(abs(w - R))
        z, v = y
        return np.array([v + p * L * z, (k2 - dp * L - (p * L) ** 2) * z - p * L * v])

    def pL(s):
        w, w1, w2, _ = profile.derivatives(s)
        return float((2 * w1 + w2) / w1) * math.log(abs(float(w) - R))

    # event list, walked from the far end towards the interface
    events = [(loc, "dirac", wt) for loc, wt in profile.dirac_terms() if 0.0 < loc < start]
    for p, h in zip(pts, halves):
        events.append((p.sigma + h, "enter", None))
        events.append((p.sigma, "jump", p))
        events.append((p.sigma - h, "leave", None))
    events.sort(key=lambda e: -e[0])
    events.append((0.0, "end", None))

    y = np.array([geo.data[0], geo.data[1]], dtype=complex)
    in_window = False
    t = start
    ts, zs, vs = [], [], []
    at_sigma = []

    def record(sol, windowed):
        z, v = sol.y[:, 0], sol.y[:, 1]
        if windowed:
            v = v + np.array([pL(s) for s in sol.t]) * z
        ts.append(sol.t)
        zs.append(z)
        vs.append(v)

    for loc, kind, data in events:
        target = loc + JUMP_GAP * max(1.0, abs(loc)) if kind == "jump" else loc
        if target < t:
            sol = dopri(regular if in_window else plain, t, target, y, rtol=rtol, atol=atol)
            record(sol, in_window)
            y = sol.y_end.copy()
        t = loc
        if kind == "enter":
            y[1] = y[1] - pL(loc) * y[0]
            in_window = True
        elif kind == "leave":
            y[1] = y[1] + pL(loc) * y[0]
            in_window = False
        elif kind == "jump":
            a = sign * math.pi * data.varpi_dot / abs(data.w_dot)
            at_sigma.append(abs(complex(y[0])) ** 2)
            # walking towards smaller s removes the jump picked up across sigma
            y[1] = y[1] - 1j * a * y[0]
            t = loc - JUMP_GAP * max(1.0, abs(loc))
        elif kind == "dirac":
            y[1] = y[1] - data * y[0] / (float(profile.w(loc)) - R)

    s = np.concatenate(ts)[::-1]
    z = np.concatenate(zs)[::-1]
    v = np.concatenate(vs)[::-1]
    x1, x2, x3, ph = _xi_from_zeta(z, v)
    n0 = x1[0]
    x1, x2, x3, ph = x1 / n0, x2 / n0, x3 / n0, ph / n0
    xs = tuple(x / n0 for x in at_sigma[::-1])
    return CriticalLayerState(
        "Limit", s, x1, x2, x3, ph, complex(R, 0.0), int(k),
        sigmas=tuple(sigmas), xi1_at_sigma=xs,
        w_dot=tuple(p.w_dot for p in pts), varpi_dot=tuple(p.varpi_dot for p in pts),
        sign=sign, extras={"delta0": delta, "halfwidths": tuple(halves)})


# -- bifurcation --------------------------------------------------------------

@dataclass(frozen=True)
class BifurcationPrediction:
    k: int
    branch: int
    c_k: float
    h_I: float
    c_sharp: float
    limit: CriticalLayerState = field(repr=False, default=None)


def _check_hypotheses(c_k, pts):
    if not pts:
        raise HypothesisViolated(f"c = {c_k:.6g} does not meet the outer range")
    prod = [c_k * p.varpi_dot for p in pts]
    if any(v > 0 for v in prod):
        raise HypothesisViolated("c varpi'(s_j) must be non-positive at every crossing")
    tail = prod[-2:]
    if not any(v < 0 for v in tail):
        raise HypothesisViolated("strict sign needed at the last or second-to-last crossing")


def predict_bifurcation(setup, k, branch=1, *, config=None):
    """Growth coefficient c_sharp of the mode emanating from c_pm^(k)."""
    exp = small_density_expansion(setup, k)
    c_k = exp.branch(branch)
    h_I = exp.h_I(branch)
    profile = setup.profile_minus
    pts = [p for p in profile.critical_points(c_k).points
           if 0.0 < p.sigma < setup.s_out]
    _check_hypotheses(c_k, pts)
    lim = integrate_limit(setup, c_k, 1, k=k, config=config)
    c_sharp = h_I * lim.phi0
    if not c_sharp > ZERO_PREDICTION:
        raise ZeroPrediction(f"c_sharp = {c_sharp:.3g} is not positive")
    return BifurcationPrediction(int(k), 1 if branch > 0 else -1, c_k, h_I, c_sharp, lim)


@dataclass(frozen=True)
class BifurcationSolve:
    k: int
    epsilon: float
    c_k: float
    c_sharp: float
    nu1: float
    nu2: float
    c_final: complex
    lambda_residuals: tuple
    iterations: int = 0

    @property
    def accepted(self):
        return all(r <= ACCEPT for r in self.lambda_residuals)

    @property
    def mode(self):
        return Mode(self.k, self.c_final)


def _speed(c_k, c_sharp, eps, nu):
    return complex(c_k + nu[0], eps * (c_sharp + nu[1]))


def solve_unstable_mode(setup, k, branch=1, epsilon=None, *, config=None,
                        eps_cap=EPS_CAP, prediction=None):
    """Solve Lambda_1 = Lambda_2 = 0 for the unstable mode at density ratio ``epsilon``."""
    eps = setup.epsilon if epsilon is None else float(epsilon)
    if eps < 0 or eps > eps_cap:
        raise BadParams(f"epsilon must lie in [0, {eps_cap}]")
    pred = prediction or predict_bifurcation(setup, k, branch, config=config)
    c_k, c_sharp = pred.c_k, pred.c_sharp
    if eps == 0:
        return BifurcationSolve(int(k), 0.0, c_k, c_sharp, 0.0, 0.0,
                                complex(c_k, 0.0), (0.0, 0.0), 0)
    work = setup.with_(rho_minus=eps * setup.rho_plus)

    def lam(nu):
        c = _speed(c_k, c_sharp, eps, nu)
        if not c.imag > 0:
            raise LeftHalfPlane(f"iterate left the upper half plane at c={c}")
        Z = integrate_full(work, Mode(k, c)).zeta_dot_0
        root = branch_root(work, k, Z, c)
        return np.array([c_k + nu[0] - root.real, c_sharp + nu[1] - root.imag / eps])

    nu = np.zeros(2)
    F = lam(nu)
    for it in range(1, MAX_NEWTON + 1):
        J = np.empty((2, 2))
        for j in range(2):
            h = FD_REL * (1 + abs(nu[j]))
            e = np.zeros(2)
            e[j] = h
            J[:, j] = (lam(nu + e) - F) / h
        try:
            step = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            raise NewtonDiverged("singular Jacobian") from None
        t = 1.0
        norm0 = np.max(np.abs(F))
        for _ in range(MAX_BACKTRACK):
            trial = nu + t * step
            try:
                Ft = lam(trial)
            except LeftHalfPlane:
                Ft = None
            if Ft is not None and np.max(np.abs(Ft)) < norm0:
                break
            t *= 0.5
        else:
            raise NewtonDiverged(f"no descent after {MAX_BACKTRACK} halvings")
        nu, F = trial, Ft
        if np.max(np.abs(F)) <= ACCEPT:
            break
    else:
        raise NewtonDiverged(f"Lambda stayed at {np.max(np.abs(F)):.3g}")
    c = _speed(c_k, c_sharp, eps, nu)
    if not c.imag > 0:
        raise LeftHalfPlane(f"converged to c={c}")
    return BifurcationSolve(int(k), eps, c_k, c_sharp, float(nu[0]), float(nu[1]), c,
                            (float(abs(F[0])), float(abs(F[1]))), it)


# -- square-root scaling for the piecewise outer flow ---------------------------

@dataclass(frozen=True)
class ScalingStudy:
    slope: float
    intercept: float
    lambda_plus: float
    s_star: float
    epsilons: tuple
    lambda_I: tuple
    lambda_R: tuple
    real_slope: float
    separation: float


def epsilon_scaling_study(params, eps_ladder):
    """Fit log Im(root) against log epsilon for the piecewise outer example."""
    eps = np.asarray(sorted(eps_ladder), dtype=float)
    if eps.size < 2 or eps[0] <= 0 or eps[-1] / eps[0] < 1e3 - 1e-9:
        raise BadParams("the epsilon ladder must be positive and span three decades")
    p = dict(params)
    lam_minus, lam_plus = lipschitz_lambdas(p)
    if "s_star" not in p:
        p["s_star"] = calibrate_sstar({"k": p["k"], "omega_star": p["omega_star"],
                                       "b": p["b"], "target": lam_plus})
    roots = [lipschitz_case_roots(p, e)[0] for e in eps]
    li = np.array([r.imag for r in roots])
    lr = np.array([r.real for r in roots])
    slope, intercept = np.polyfit(np.log(eps), np.log(li), 1)
    dev = np.abs(lr - lam_plus)
    real_slope = (float(np.polyfit(np.log(eps), np.log(dev), 1)[0])
                  if np.all(dev > 0) else math.inf)
    outer = PiecewiseOuter(omega_star=p["omega_star"], b=p["b"], s_star=p["s_star"])
    outer = outer.with_domain(0.0, math.inf)
    sep = math.inf
    for x in lr:
        try:
            for pt in outer.critical_points(x, floor=0.0).points:
                sep = min(sep, abs(pt.sigma - p["s_star"]))
        except NotRegularValue:
            sep = 0.0
    return ScalingStudy(float(slope), float(intercept), lam_plus, p["s_star"], tuple(eps),
                        tuple(li), tuple(lr), real_slope, sep)
