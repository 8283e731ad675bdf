"""Angular-velocity profiles in the log-radius coordinate ``s = log r``.

Every profile exposes ``w``, its ``s``-derivatives and the vorticity
``varpi = 2 w + w'``. The interface sits at ``s = 0`` (radius one).

Kinds
-----
Constant(B)                       w = B
TaylorCouette(A, B)               w = A exp(-2 s) + B
PiecewiseOuter(omega_star, b, s_star)
                                  Lipschitz wind, constant vorticity 2 omega_star
                                  on (0, s_star) and irrotational beyond
Tabulated(nodes)                  natural cubic spline through (s, w) pairs
TanhShear(base, amplitude, center, width)
                                  smooth shear layer base + amplitude tanh((s-center)/width)
"""

from dataclasses import dataclass, field, replace
from bisect import bisect_right
import math

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from .errors import (
    BadParams,
    DistributionalPoint,
    NotRegularValue,
    OutOfDomain,
    TangencySuspected,
    Unbounded,
)

REGULARITY_FLOOR = 1e-6
LOCATION_TOL = 1e-12
GRID_DENSITY = 2048
# stand-in for an infinite end when a finite sampling window is needed
FAR = 40.0


@dataclass(frozen=True)
class CriticalPoint:
    sigma: float
    w_dot: float
    varpi_dot: float


@dataclass(frozen=True)
class CriticalPointSet:
    value: float
    points: tuple = ()

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    @property
    def sigmas(self):
        return [p.sigma for p in self.points]


@dataclass(frozen=True)
class AngularProfile:
    """Base class; subclasses implement :meth:`derivatives`."""

    domain: tuple = field(default=(-math.inf, math.inf), kw_only=True)

    # True when varpi_dot vanishes identically (the Rayleigh coefficient
    # then does not depend on the phase speed).
    vorticity_constant = False

    def with_domain(self, lo, hi):
        return replace(self, domain=(float(lo), float(hi)))

    @property
    def s_lo(self):
        return self.domain[0]

    @property
    def s_hi(self):
        return self.domain[1]

    def dirac_terms(self):
        """Point masses ``(location, weight)`` contained in ``varpi_dot``."""
        return ()

    def derivatives(self, s):
        """Return ``(w, w', w'', w''')`` at ``s`` (scalar or array)."""
        raise NotImplementedError

    def scalar_kernel(self):
        """Fast ``s -> (w, w', varpi')`` on python floats for scalar stepping."""
        der = self.derivatives

        def kernel(s):
            w, w1, w2, _ = der(s)
            return float(w), float(w1), 2.0 * float(w1) + float(w2)

        return kernel

    def w(self, s):
        return self.derivatives(s)[0]

    def _check(self, s):
        lo, hi = self.domain
        arr = np.asarray(s, dtype=float)
        tol = 1e-12 * (1.0 + np.abs(arr))
        if np.any(arr < lo - tol) or np.any(arr > hi + tol):
            raise OutOfDomain(f"s={s} outside [{lo}, {hi}]")
        for loc, _ in self.dirac_terms():
            if np.any(arr == loc):
                raise DistributionalPoint(f"varpi_dot has a Dirac mass at s={loc}")

    def evaluate(self, s):
        """``(w, w_dot, varpi, varpi_dot)`` at ``s``."""
        self._check(s)
        w, w1, w2, _ = self.derivatives(s)
        return w, w1, 2 * w + w1, 2 * w1 + w2

    def rayleigh_coefficient(self, s, c):
        """``varpi_dot / (w - c)`` without domain checks (hot path)."""
        w, w1, w2, _ = self.derivatives(s)
        return (2 * w1 + w2) / (w - c)

    # -- range -----------------------------------------------------------
    def value_range(self):
        """``(inf w, sup w)`` over the profile's domain, limits included."""
        lo, hi = self._window()
        s = np.linspace(lo, hi, max(4097, int(GRID_DENSITY * (hi - lo)) + 1))
        vals = self.w(s)
        m, M = float(np.min(vals)), float(np.max(vals))
        # refine interior extrema where w' changes sign
        d = self.derivatives(s)[1]
        for i in np.nonzero(np.sign(d[:-1]) * np.sign(d[1:]) < 0)[0]:
            x = brentq(lambda x: self.derivatives(x)[1], s[i], s[i + 1], xtol=1e-14)
            v = float(self.w(x))
            m, M = min(m, v), max(M, v)
        tail = self._tail_limits()
        return min([m] + tail), max([M] + tail)

    def _tail_limits(self):
        return []

    def _window(self):
        lo, hi = self.domain
        return (max(lo, -FAR), min(hi, FAR))

    # -- critical points -------------------------------------------------
    def critical_points(self, value, floor=REGULARITY_FLOOR):
        """Ordered preimage of ``value`` with derivative data.

        Sign changes are bracketed on a dense grid (2048 intervals per unit
        length, doubled until the count is stable twice) and refined by
        bisection to 1e-12.
        """
        value = float(value)
        lo, hi = self._window()
        sigmas = []
        if hi > lo:
            counts = []
            n = max(16, int(math.ceil(GRID_DENSITY * (hi - lo))))
            while True:
                found = self._bracket_roots(value, lo, hi, n, floor)
                counts.append(len(found))
                if len(counts) >= 3 and counts[-1] == counts[-2] == counts[-3]:
                    break
                if n > 2 ** 22:
                    raise TangencySuspected("preimage count did not stabilise")
                n *= 2
            sigmas.extend(found)
        sigmas.extend(self._tail_crossings(value))
        points = []
        for sg in sorted(sigmas):
            if self.dirac_terms() and any(abs(sg - loc) < LOCATION_TOL for loc, _ in self.dirac_terms()):
                raise NotRegularValue(f"crossing at the Dirac support s={sg}")
            _, w1, w2, _ = self.derivatives(sg)
            w1 = float(w1)
            if abs(w1) < floor:
                raise NotRegularValue(f"|w'({sg:.6g})| = {abs(w1):.3g} below floor")
            points.append(CriticalPoint(float(sg), w1, float(2 * w1 + w2)))
        return CriticalPointSet(value, tuple(points))

    def _bracket_roots(self, value, lo, hi, n, floor):
        s = np.linspace(lo, hi, n + 1)
        g = self.w(s) - value
        roots = []
        exact = np.nonzero(g == 0.0)[0]
        roots.extend(float(s[i]) for i in exact)
        sg = np.sign(g)
        for i in np.nonzero(sg[:-1] * sg[1:] < 0)[0]:
            r = brentq(lambda x: float(self.w(x)) - value, s[i], s[i + 1],
                       xtol=LOCATION_TOL, rtol=4 * np.finfo(float).eps)
            roots.append(r)
        # near-tangency: a local extremum of |g| close to zero without a sign change
        a = np.abs(g)
        h = (hi - lo) / n
        interior = np.nonzero((a[1:-1] < a[:-2]) & (a[1:-1] < a[2:]))[0] + 1
        for i in interior:
            if sg[i - 1] == sg[i + 1] and sg[i] != 0 and a[i] < floor * h:
                raise NotRegularValue(f"value {value} is (nearly) tangent near s={s[i]:.6g}")
        return sorted(set(roots))

    def _tail_crossings(self, value):
        return []


@dataclass(frozen=True)
class Constant(AngularProfile):
    B: float = 0.0
    vorticity_constant = True

    def derivatives(self, s):
        z = np.zeros_like(np.asarray(s, dtype=float))
        return self.B + z, z, z, z

    def value_range(self):
        return float(self.B), float(self.B)

    def critical_points(self, value, floor=REGULARITY_FLOOR):
        if float(value) == float(self.B):
            raise NotRegularValue("value equals a constant profile")
        return CriticalPointSet(float(value), ())


@dataclass(frozen=True)
class TaylorCouette(AngularProfile):
    A: float = 0.0
    B: float = 0.0
    vorticity_constant = True

    def derivatives(self, s):
        e = self.A * np.exp(-2.0 * np.asarray(s, dtype=float))
        return e + self.B, -2.0 * e, 4.0 * e, -8.0 * e

    def value_range(self):
        lo, hi = self.domain
        if self.A != 0.0 and lo == -math.inf:
            raise Unbounded("A exp(-2s) diverges as s -> -inf; use A = 0 on a disk")
        vals = [float(self.w(lo)) if lo > -math.inf else self.B,
                float(self.w(hi)) if hi < math.inf else self.B]
        return min(vals), max(vals)

    def _tail_crossings(self, value):
        lo, hi = self.domain
        out = []
        if hi > FAR and self.A != 0.0:
            ratio = (value - self.B) / self.A
            if ratio > 0:
                s = -0.5 * math.log(ratio)
                if FAR < s <= hi:
                    out.append(s)
        if lo < -FAR and self.A != 0.0:
            raise Unbounded("A exp(-2s) diverges as s -> -inf")
        return out


@dataclass(frozen=True)
class PiecewiseOuter(AngularProfile):
    omega_star: float = 1.0
    b: float = 0.0
    s_star: float = 1.0

    def __post_init__(self):
        if not self.s_star > 0:
            raise BadParams("s_star must be positive")

    @property
    def tail_coefficient(self):
        return self.omega_star * math.expm1(2 * self.s_star) + self.b

    def dirac_terms(self):
        return ((self.s_star, -2.0 * self.omega_star),)

    def derivatives(self, s):
        s = np.asarray(s, dtype=float)
        e = np.exp(-2.0 * s)
        inner = s < self.s_star
        c_in = self.b - self.omega_star
        c = np.where(inner, c_in, self.tail_coefficient)
        w = np.where(inner, self.omega_star, 0.0) + c * e
        return w, -2.0 * c * e, 4.0 * c * e, -8.0 * c * e

    def value_range(self):
        lo, hi = self.domain
        pts = [lo, min(hi, self.s_star)]
        if hi > self.s_star:
            pts.append(self.s_star)
        vals = [float(self.w(p)) for p in pts if math.isfinite(p)]
        if hi == math.inf:
            vals.append(0.0)
        else:
            vals.append(float(self.w(hi)))
        return min(vals), max(vals)

    def _window(self):
        lo, hi = self.domain
        return lo, min(hi, self.s_star)

    def _tail_crossings(self, value):
        lo, hi = self.domain
        if hi <= self.s_star or value == 0.0:
            return []
        ratio = value / self.tail_coefficient
        if ratio <= 0:
            return []
        s = -0.5 * math.log(ratio)
        return [s] if self.s_star < s <= hi else []


@dataclass(frozen=True)
class TanhShear(AngularProfile):
    base: float = 0.0
    amplitude: float = 1.0
    center: float = 0.0
    width: float = 1.0

    def __post_init__(self):
        if not self.width > 0:
            raise BadParams("width must be positive")

    def derivatives(self, s):
        x = (np.asarray(s, dtype=float) - self.center) / self.width
        t = np.tanh(x)
        sech2 = 1.0 - t * t
        a = self.amplitude
        d = self.width
        return (self.base + a * t,
                a * sech2 / d,
                -2.0 * a * t * sech2 / d ** 2,
                a * sech2 * (6.0 * t * t - 2.0) / d ** 3)

    def scalar_kernel(self):
        base, a, c0, d = self.base, self.amplitude, self.center, self.width
        tanh = math.tanh

        def kernel(s):
            t = tanh((s - c0) / d)
            sech2 = 1.0 - t * t
            w1 = a * sech2 / d
            return base + a * t, w1, 2.0 * w1 - 2.0 * a * t * sech2 / (d * d)

        return kernel

    def _window(self):
        lo, hi = self.domain
        span = 40.0 * self.width
        return max(lo, self.center - span), min(hi, self.center + span)

    def _tail_limits(self):
        lo, hi = self.domain
        out = []
        if lo == -math.inf:
            out.append(self.base - self.amplitude)
        if hi == math.inf:
            out.append(self.base + self.amplitude)
        return out


@dataclass(frozen=True)
class Tabulated(AngularProfile):
    """Natural cubic spline through ``nodes``; held constant beyond an end
    node that faces an infinite domain side."""

    nodes: tuple = ()

    def __post_init__(self):
        nodes = tuple((float(a), float(b)) for a, b in self.nodes)
        if len(nodes) < 4:
            raise BadParams("Tabulated profile needs at least 4 nodes")
        xs = [a for a, _ in nodes]
        if any(x2 <= x1 for x1, x2 in zip(xs, xs[1:])):
            raise BadParams("Tabulated nodes must be strictly increasing in s")
        object.__setattr__(self, "nodes", nodes)
        spline = CubicSpline(xs, [b for _, b in nodes], bc_type="natural")
        object.__setattr__(self, "_spline", spline)
        lo, hi = self.domain
        tol = 1e-12
        if (math.isfinite(lo) and lo < xs[0] - tol) or (math.isfinite(hi) and hi > xs[-1] + tol):
            raise BadParams(f"nodes [{xs[0]}, {xs[-1]}] do not cover domain {self.domain}")
        for end, side in ((xs[0], lo), (xs[-1], hi)):
            if not math.isfinite(side) and abs(float(spline(end, 1))) > REGULARITY_FLOOR:
                raise BadParams("w' must vanish at an end node facing an infinite domain side")

    def derivatives(self, s):
        s = np.asarray(s, dtype=float)
        xs0, xs1 = self.nodes[0][0], self.nodes[-1][0]
        sc = np.clip(s, xs0, xs1)
        sp = self._spline
        inside = (s >= xs0) & (s <= xs1)
        w = sp(sc)
        return (w, np.where(inside, sp(sc, 1), 0.0),
                np.where(inside, sp(sc, 2), 0.0), np.where(inside, sp(sc, 3), 0.0))

    def scalar_kernel(self):
        sp = self._spline
        xs = [float(x) for x in sp.x]
        coef = sp.c.T.tolist()
        last = len(xs) - 2
        w_lo, w_hi = self.nodes[0][1], self.nodes[-1][1]

        def kernel(s):
            if s <= xs[0]:
                return w_lo, 0.0, 0.0
            if s >= xs[-1]:
                return w_hi, 0.0, 0.0
            i = min(bisect_right(xs, s) - 1, last)
            a3, a2, a1, a0 = coef[i]
            h = s - xs[i]
            w = ((a3 * h + a2) * h + a1) * h + a0
            w1 = (3 * a3 * h + 2 * a2) * h + a1
            w2 = 6 * a3 * h + 2 * a2
            return w, w1, 2.0 * w1 + w2

        return kernel

    def _window(self):
        lo, hi = self.domain
        return max(lo, self.nodes[0][0]), min(hi, self.nodes[-1][0])


KINDS = {
    "constant": Constant,
    "taylor_couette": TaylorCouette,
    "piecewise_outer": PiecewiseOuter,
    "tabulated": Tabulated,
    "tanh_shear": TanhShear,
}


def from_dict(data):
    """Build a profile from a ``{"kind": ..., **params}`` mapping."""
    data = dict(data)
    kind = data.pop("kind", None)
    if kind not in KINDS:
        raise BadParams(f"unknown profile kind {kind!r}")
    if kind == "tabulated":
        data["nodes"] = tuple(tuple(n) for n in data.get("nodes", ()))
    try:
        return KINDS[kind](**data)
    except TypeError as exc:
        raise BadParams(str(exc)) from None


@dataclass(frozen=True)
class ProblemSetup:
    """Two-phase circular configuration with the interface at r = 1."""

    rho_plus: float
    rho_minus: float
    alpha: float
    r_in: float
    r_out: float
    profile_plus: AngularProfile
    profile_minus: AngularProfile

    def __post_init__(self):
        if not self.rho_plus > 0:
            raise BadParams("rho_plus must be positive")
        if not self.rho_minus >= 0:
            raise BadParams("rho_minus must be non-negative")
        if not self.alpha >= 0:
            raise BadParams("alpha must be non-negative")
        if not 0 <= self.r_in < 1:
            raise BadParams("r_in must lie in [0, 1)")
        if not self.r_out > 1:
            raise BadParams("r_out must exceed 1")
        object.__setattr__(self, "profile_plus",
                           self.profile_plus.with_domain(self.s_in, 0.0))
        object.__setattr__(self, "profile_minus",
                           self.profile_minus.with_domain(0.0, self.s_out))

    @property
    def epsilon(self):
        return self.rho_minus / self.rho_plus

    @property
    def s_in(self):
        return math.log(self.r_in) if self.r_in > 0 else -math.inf

    @property
    def s_out(self):
        return math.log(self.r_out) if math.isfinite(self.r_out) else math.inf

    @property
    def is_disk(self):
        return self.r_in == 0

    def profile(self, side):
        return self.profile_plus if side == "plus" else self.profile_minus

    def density(self, side):
        return self.rho_plus if side == "plus" else self.rho_minus

    def with_(self, **changes):
        return replace(self, **changes)
