"""Shooting solver for the Rayleigh boundary-value problem on either side.

On each side ``zeta`` solves

    zeta'' = (k^2 + varpi_dot / (w - c)) zeta,    zeta(0) = 1,

with ``zeta = 0`` on the fixed wall (or decay on a disk / unbounded exterior).
We shoot from the wall towards the interface with ``(zeta, zeta') = (0, 1)``
and rescale so that ``zeta(0) = 1``. On a disk the integration starts at
``-12/|k|`` with the decaying data ``zeta' = |k| zeta``; an unbounded exterior
is closed the same way with ``zeta' = -|k| zeta``.
"""

from dataclasses import dataclass
from functools import lru_cache
import math

import numpy as np

from .errors import InterfaceZero, SingularCoefficient
from .ode import dopri, dopri_linear2

RTOL = 1e-10
ATOL = 1e-12
TRUNCATION = 12.0
NEAR_SINGULAR = 1e-4
SINGULAR_MARGIN = 1e-8
INTERFACE_ZERO = 1e-12
# below this |Im c| the critical layers become step boundaries
LAYER_BREAK = 0.1


@dataclass(frozen=True)
class Mode:
    k: int
    c: complex

    def __post_init__(self):
        if int(self.k) != self.k or self.k == 0:
            raise ValueError("k must be a nonzero integer")
        object.__setattr__(self, "k", int(self.k))
        object.__setattr__(self, "c", complex(self.c))

    @property
    def real(self):
        return self.c.real

    @property
    def imag(self):
        return self.c.imag

    @property
    def growth_rate(self):
        return -1j * self.k * self.c

    @property
    def unstable(self):
        return self.c.imag > 0


@dataclass(frozen=True)
class BvpSolution:
    side: str
    mode: Mode
    zeta_prime_at_0: complex
    s: np.ndarray
    zeta: np.ndarray
    zeta_dot: np.ndarray
    condition_estimate: float
    # unnormalised interface value of the shooting solution
    raw_interface: complex = 1.0
    # dense integrator output between jumps, as (s_lo, s_hi, Solution)
    pieces: tuple = ()

    @property
    def trace(self):
        return list(zip(self.s, self.zeta, self.zeta_dot))

    def evaluate(self, s, piece):
        """Normalised (zeta, zeta') at points ``s`` inside piece ``piece``."""
        y = self.pieces[piece][2](s) / self.raw_interface
        return y[:, 0], y[:, 1]


@dataclass(frozen=True)
class _Geometry:
    start: float
    data: tuple


def geometry(setup, side, k):
    """Where the shot starts and with which data."""
    ak = abs(k)
    prof = setup.profile(side)
    lo, hi = quiet_bounds(prof)
    if side == "plus":
        if setup.is_disk:
            return _Geometry(min(0.0, lo) - TRUNCATION / ak, (1.0, float(ak)))
        return _Geometry(setup.s_in, (0.0, 1.0))
    if math.isfinite(setup.s_out):
        return _Geometry(setup.s_out, (0.0, 1.0))
    return _Geometry(max(0.0, hi) + TRUNCATION / ak, (1.0, -float(ak)))


def quiet_bounds(profile):
    """Interval outside of which the Rayleigh coefficient is negligible."""
    from .profiles import PiecewiseOuter, Tabulated, TanhShear

    if isinstance(profile, PiecewiseOuter):
        return 0.0, profile.s_star
    if isinstance(profile, TanhShear):
        return profile.center - 20 * profile.width, profile.center + 20 * profile.width
    if isinstance(profile, Tabulated):
        return profile.nodes[0][0], profile.nodes[-1][0]
    return 0.0, 0.0


def pointwise_flat(profile):
    """varpi_dot vanishes at every regular point (Dirac masses aside)."""
    from .profiles import Constant, PiecewiseOuter, TaylorCouette

    return isinstance(profile, (Constant, TaylorCouette, PiecewiseOuter))


@lru_cache(maxsize=None)
def _profile_range(profile):
    return profile.value_range()


def _check_admissible(profile, c):
    c = np.atleast_1d(c)
    if pointwise_flat(profile):
        for loc, _ in profile.dirac_terms():
            wl = float(profile.w(loc))
            if np.any(np.abs(wl - c) < SINGULAR_MARGIN):
                raise SingularCoefficient(f"w({loc}) = {wl} coincides with c")
        return
    m, M = _profile_range(profile)
    bad = (c.imag == 0) & (c.real >= m - SINGULAR_MARGIN) & (c.real <= M + SINGULAR_MARGIN)
    if np.any(bad):
        raise SingularCoefficient(f"real c={c[bad][0]} inside the range [{m}, {M}]")


def _layers(profile, c):
    """Critical-layer locations and near-singular phase speeds in a batch."""
    if pointwise_flat(profile):
        return [], np.array([], dtype=complex)
    m, M = _profile_range(profile)
    lo, hi = profile.domain
    c = np.atleast_1d(c)
    scale = max(1.0, M - m)
    breaks = set()
    near = []
    for cc in c:
        if abs(cc.imag) < LAYER_BREAK * scale and m <= cc.real <= M:
            try:
                pts = profile.critical_points(cc.real, floor=0.0).sigmas
            except Exception:
                pts = []
            breaks.update(p for p in pts if lo < p < hi)
        dist = math.hypot(cc.imag, max(0.0, m - cc.real, cc.real - M))
        if dist < NEAR_SINGULAR:
            near.append(cc)
    return sorted(breaks), np.array(near, dtype=complex)


def _step_cap(profile, near):
    if near.size == 0:
        return None

    def cap(s):
        w, w1, _, _ = profile.derivatives(s)
        return 1e-2 * float(np.min(np.abs(w - near))) / max(abs(float(w1)), 1.0)

    return cap


def _shoot(profile, k, c, geo, *, dense=False, rtol=RTOL, atol=ATOL):
    """Integrate from ``geo.start`` to 0; ``c`` may be an array (batch).

    Returns a list of (Solution, jump_location_or_None) segments ordered from
    the far end towards the interface.
    """
    c = np.asarray(c, dtype=complex)
    k2 = float(k) ** 2
    flat = pointwise_flat(profile)
    if flat:
        def rhs(s, y):
            return np.array([y[1], k2 * y[0]])
    else:
        def rhs(s, y):
            w, w1, w2, _ = profile.derivatives(s)
            q = k2 + (2 * w1 + w2) / (w - c)
            return np.array([y[1], q * y[0]])

    start = geo.start
    y = np.empty((2,) + c.shape, dtype=complex)
    y[0] = geo.data[0]
    y[1] = geo.data[1]
    breaks, near = _layers(profile, c.ravel())
    cap = _step_cap(profile, near)
    direction = 1.0 if 0.0 > start else -1.0
    jumps = sorted((loc, wt) for loc, wt in profile.dirac_terms()
                   if min(start, 0.0) < loc < max(start, 0.0))
    if direction < 0:
        jumps = jumps[::-1]
    pieces = []
    t = start
    for loc, weight in list(jumps) + [(0.0, None)]:
        sol = dopri(rhs, t, loc, y, rtol=rtol, atol=atol, step_cap=cap,
                    breakpoints=breaks, dense=dense, record=dense)
        pieces.append(sol)
        y = sol.y_end.copy()
        if weight is not None:
            wl = float(profile.w(loc))
            y[1] = y[1] + direction * weight * y[0] / (wl - c)
        t = loc
    return pieces, y


def _shoot_scalar(profile, k, c, geo, *, rtol=RTOL, atol=ATOL):
    """Single-speed shot on python scalars; returns ``(zeta(0), zeta'(0))``."""
    c = complex(c)
    k2 = float(k) ** 2
    kernel = profile.scalar_kernel()

    def q(s):
        w, _, vd = kernel(s)
        return k2 + vd / (w - c)

    breaks, near = _layers(profile, np.array([c]))
    cap = None
    if near.size:
        def cap(s):
            w, w1, _ = kernel(s)
            return 1e-2 * abs(w - c) / max(abs(w1), 1.0)

    start = geo.start
    direction = 1.0 if 0.0 > start else -1.0
    jumps = sorted((loc, wt) for loc, wt in profile.dirac_terms()
                   if min(start, 0.0) < loc < max(start, 0.0))
    if direction < 0:
        jumps = jumps[::-1]
    z, v = complex(geo.data[0]), complex(geo.data[1])
    t = start
    for loc, weight in list(jumps) + [(0.0, None)]:
        z, v, _ = dopri_linear2(q, t, loc, z, v, rtol=rtol, atol=atol,
                                step_cap=cap, breakpoints=breaks)
        if weight is not None:
            v = v + direction * weight * z / (float(profile.w(loc)) - c)
        t = loc
    return z, v


def _has_layer(profile, c):
    """Speeds whose critical layers sit close enough to need resolving."""
    m, M = _profile_range(profile)
    scale = max(1.0, M - m)
    return (np.abs(c.imag) < LAYER_BREAK * scale) & (c.real >= m) & (c.real <= M)


@lru_cache(maxsize=256)
def _flat_interface(profile, k, geo, rtol, atol):
    pieces, y = _shoot(profile, k, 0j, geo, rtol=rtol, atol=atol)
    return complex(y[0]), complex(y[1])


def shoot_interface(setup, side, k, c, *, rtol=RTOL, atol=ATOL):
    """Unnormalised ``(zeta(0), zeta'(0))`` for a batch of phase speeds."""
    profile = setup.profile(side)
    c = np.asarray(c, dtype=complex)
    _check_admissible(profile, c)
    geo = geometry(setup, side, k)
    if pointwise_flat(profile) and not profile.dirac_terms():
        y0, y1 = _flat_interface(profile, abs(int(k)), geo, rtol, atol)
        return np.full(c.shape, y0), np.full(c.shape, y1)
    flat = c.ravel()
    out0 = np.empty(flat.shape, dtype=complex)
    out1 = np.empty(flat.shape, dtype=complex)
    # speeds with a sharp critical layer need many small steps of their own;
    # stepping them one at a time keeps the vectorised batch cheap
    lone = np.zeros(flat.shape, bool) if pointwise_flat(profile) else _has_layer(profile, flat)
    if flat.size == 1:
        lone[:] = True
    for i in np.nonzero(lone)[0]:
        out0[i], out1[i] = _shoot_scalar(profile, k, flat[i], geo, rtol=rtol, atol=atol)
    rest = np.nonzero(~lone)[0]
    if rest.size:
        _, y = _shoot(profile, k, flat[rest], geo, rtol=rtol, atol=atol)
        out0[rest] = y[0]
        out1[rest] = y[1]
    return out0.reshape(c.shape), out1.reshape(c.shape)


def solve_side(setup, side, mode, *, trace_min=1024, rtol=RTOL, atol=ATOL):
    """Solve one side's boundary-value problem for ``mode``."""
    if side not in ("plus", "minus"):
        raise ValueError("side must be 'plus' or 'minus'")
    profile = setup.profile(side)
    c = mode.c
    _check_admissible(profile, c)
    geo = geometry(setup, side, mode.k)
    pieces, y = _shoot(profile, mode.k, np.complex128(c), geo, dense=True, rtol=rtol, atol=atol)
    y0, y1 = complex(y[0]), complex(y[1])
    if abs(y0) < INTERFACE_ZERO * max(1.0, abs(y1)):
        raise InterfaceZero(f"zeta(0) vanishes for c={c}: fixed-wall eigenvalue")

    nsteps = sum(p.naccept for p in pieces)
    m = 2
    while m * nsteps < trace_min:
        m *= 2
    s_all, y_all = [], []
    for p in pieces:
        # m uniform sub-samples per accepted step
        ts = []
        for t_old, h, _, _ in p._steps:
            ts.append(t_old + h * np.arange(m) / m)
        ts.append(np.array([p.t[-1]]))
        tq = np.concatenate(ts)
        yq = p(tq)
        yq[-1] = p.y_end
        s_all.append(tq)
        y_all.append(yq)
    # jumps happen between pieces; the later piece starts with the pre-jump
    # state from the dense output, so fix its first sample
    for i in range(1, len(pieces)):
        y_all[i][0] = pieces[i].y[0]
    s = np.concatenate(s_all)
    ys = np.concatenate(y_all)
    order = np.argsort(s, kind="stable")
    if geo.start > 0:
        # backwards shot: reverse each piece so the jump pair stays ordered
        s = np.concatenate([a[::-1] for a in s_all[::-1]])
        ys = np.concatenate([b[::-1] for b in y_all[::-1]])
    else:
        s, ys = s[order], ys[order]
    zeta = ys[:, 0] / y0
    zeta_dot = ys[:, 1] / y0
    return BvpSolution(
        side=side,
        mode=mode,
        zeta_prime_at_0=y1 / y0,
        s=s,
        zeta=zeta,
        zeta_dot=zeta_dot,
        condition_estimate=(abs(y0) + abs(y1)) / abs(y0),
        raw_interface=y0,
        pieces=_sorted_pieces(pieces),
    )


def _sorted_pieces(pieces):
    spans = [(min(p.t[0], p.t[-1]), max(p.t[0], p.t[-1]), p) for p in pieces]
    return tuple(sorted(spans, key=lambda x: x[0]))


def fornberg_weights(x0, x, order):
    """Finite-difference weights for derivative ``order`` at ``x0`` on nodes ``x``."""
    n = len(x)
    c = np.zeros((n, order + 1))
    c1 = 1.0
    c4 = x[0] - x0
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, order)
        c2 = 1.0
        c5 = c4
        c4 = x[i] - x0
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for kk in range(mn, 0, -1):
                    c[i, kk] = c1 * (kk * c[i - 1, kk - 1] - c5 * c[i - 1, kk]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for kk in range(mn, 0, -1):
                c[j, kk] = (c4 * c[j, kk] - kk * c[j, kk - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, order]


def residual_check(solution, setup, *, stencil=7):
    """Max relative defect of the first-order Rayleigh system on the trace.

    The defect at a sample is measured against the size of the terms in the
    equation there, ``1 + |zeta| + |zeta'| + |q zeta|``.

    Derivatives are re-estimated with a ``stencil``-point finite-difference
    rule (Fornberg weights on the non-uniform trace grid); jumps at Dirac
    masses split the trace into separately checked segments.
    """
    profile = setup.profile(solution.side)
    k2 = float(solution.mode.k) ** 2
    c = solution.mode.c
    s, z, zd = solution.s, solution.zeta, solution.zeta_dot
    cuts = [0] + [i + 1 for i in np.nonzero(np.diff(s) == 0)[0]] + [len(s)]
    worst = 0.0
    for a, b in zip(cuts, cuts[1:]):
        seg = slice(a, b)
        ss, zz, dd = s[seg], z[seg], zd[seg]
        n = len(ss)
        if n < stencil:
            continue
        w, w1, w2, _ = profile.derivatives(ss)
        q = k2 + (2 * w1 + w2) / (w - c)
        half = stencil // 2
        for i in range(n):
            lo = min(max(0, i - half), n - stencil)
            idx = slice(lo, lo + stencil)
            wts = fornberg_weights(ss[i], ss[idx], 1)
            dz = wts @ zz[idx]
            ddz = wts @ dd[idx]
            scale = 1.0 + abs(zz[i]) + abs(dd[i]) + abs(q[i] * zz[i])
            r = max(abs(dz - dd[i]), abs(ddz - q[i] * zz[i])) / scale
            worst = max(worst, r)
    return worst
