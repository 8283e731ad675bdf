"""Locating roots of the dispersion residual in the upper half plane.

Roots are counted with the argument principle applied to the pole-free
residual (see :func:`dispersion.pole_free_values`), isolated by recursive
quadrisection and polished with Newton's method.
"""

from dataclasses import dataclass, field
import logging
import math

import numpy as np

from .dispersion import ACCEPT_REL, acceptance_scale, pole_free_values
from .errors import BoundaryRootSuspected, InvalidInput, NonConvergence
from .rayleigh_bvp import Mode

log = logging.getLogger(__name__)

ETA_FLOOR = 1e-6
MAX_DEPTH = 40
JITTER = 1e-5
DEDUP = 1e-8
INITIAL_SAMPLES = 16
MAX_PHASE_STEP = math.pi / 2
MAX_REFINE = 60


@dataclass(frozen=True)
class SearchRegion:
    re_interval: tuple
    im_interval: tuple
    source: str = "UserSpecified"
    eta_floor: float = ETA_FLOOR

    def __post_init__(self):
        lo, hi = self.im_interval
        if lo < self.eta_floor:
            object.__setattr__(self, "im_interval", (self.eta_floor, max(hi, self.eta_floor)))
        if self.re_interval[1] < self.re_interval[0] or self.im_interval[1] < self.im_interval[0]:
            raise InvalidInput("search intervals must be ordered")

    @classmethod
    def semicircle(cls, setup, k=None, eta_floor=ETA_FLOOR):
        from .semicircle import combined_range

        m, M = combined_range(setup)
        center, radius = 0.5 * (m + M), 0.5 * (M - m)
        return cls((center - radius, center + radius), (eta_floor, max(radius, eta_floor)),
                   "SemicircleBound", eta_floor)

    @property
    def empty(self):
        return (self.re_interval[1] - self.re_interval[0] <= 0
                or self.im_interval[1] - self.im_interval[0] <= 0)

    @property
    def corners(self):
        (a, b), (c, d) = self.re_interval, self.im_interval
        return complex(a, c), complex(b, c), complex(b, d), complex(a, d)

    @property
    def center(self):
        (a, b), (c, d) = self.re_interval, self.im_interval
        return complex(0.5 * (a + b), 0.5 * (c + d))

    @property
    def diameter(self):
        (a, b), (c, d) = self.re_interval, self.im_interval
        return math.hypot(b - a, d - c)

    def contains(self, z, pad=0.0):
        (a, b), (c, d) = self.re_interval, self.im_interval
        return a - pad <= z.real <= b + pad and c - pad <= z.imag <= d + pad

    def inflated(self, factor):
        (a, b), (c, d) = self.re_interval, self.im_interval
        dx, dy = 0.5 * factor * (b - a), 0.5 * factor * (d - c)
        return SearchRegion((a - dx, b + dx), (max(self.eta_floor, c - dy), d + dy),
                            self.source, self.eta_floor)


@dataclass(frozen=True)
class RootEntry:
    c: complex
    abs_residual: float
    multiplicity: int
    newton_iterations: int
    identity_defects: tuple = None


@dataclass(frozen=True)
class ModeCatalog:
    k: int
    roots: tuple
    counted: int
    region: SearchRegion = None

    @property
    def modes(self):
        return [Mode(self.k, r.c) for r in self.roots]


class _Evaluator:
    """Memoised pole-free residual together with its normaliser."""

    def __init__(self, setup, k):
        self.setup = setup
        self.k = k
        self.cache = {}
        self.threshold = ACCEPT_REL * acceptance_scale(setup, k)

    def __call__(self, zs):
        zs = np.asarray(zs, dtype=complex)
        todo = [z for z in dict.fromkeys(zs.tolist()) if z not in self.cache]
        if todo:
            arr = np.array(todo)
            dt, norm = pole_free_values(self.setup, self.k, arr, with_norm=True)
            for z, a, b in zip(todo, dt, norm):
                self.cache[z] = (complex(a), complex(b))
        vals = np.array([self.cache[z][0] for z in zs.tolist()])
        norms = np.array([self.cache[z][1] for z in zs.tolist()])
        return vals, norms

    def residual(self, z):
        v, n = self([z])
        return complex(v[0] / n[0])


def _segments_rect(region):
    a, b, c, d = region.corners
    return [(a, b), (b, c), (c, d), (d, a)]


def _line(z0, z1):
    return lambda t: z0 + (z1 - z0) * t


def _arc(center, radius, th0, th1):
    return lambda t: center + radius * np.exp(1j * (th0 + (th1 - th0) * t))


def _winding(ev, paths):
    """Total phase change of the pole-free residual along closed ``paths``."""
    total = 0.0
    for path in paths:
        t = np.linspace(0.0, 1.0, INITIAL_SAMPLES + 1)
        z = path(t)
        f, norm = ev(z)
        for _ in range(MAX_REFINE):
            small = np.abs(f / norm) <= ev.threshold
            if np.any(small):
                raise BoundaryRootSuspected(f"|D| below acceptance on the contour at {z[small][0]}")
            dphi = np.angle(f[1:] / f[:-1])
            bad = np.nonzero(np.abs(dphi) >= MAX_PHASE_STEP)[0]
            if bad.size == 0:
                break
            tm = 0.5 * (t[bad] + t[bad + 1])
            if np.min(t[bad + 1] - t[bad]) < 1e-14:
                raise BoundaryRootSuspected("phase refinement stalled near the contour")
            zm = path(tm)
            fm, nm = ev(zm)
            t = np.insert(t, bad + 1, tm)
            z = np.insert(z, bad + 1, zm)
            f = np.insert(f, bad + 1, fm)
            norm = np.insert(norm, bad + 1, nm)
        else:
            raise BoundaryRootSuspected("phase refinement did not settle")
        total += float(np.sum(np.angle(f[1:] / f[:-1])))
    turns = total / (2 * math.pi)
    n = int(round(turns))
    if abs(turns - n) > 0.1:
        raise BoundaryRootSuspected(f"non-integer winding {turns:.3f}")
    return n


def _count_rect(ev, region):
    if region.empty:
        return 0
    return _winding(ev, [_line(z0, z1) for z0, z1 in _segments_rect(region)])


def count_roots(setup, k, region, *, evaluator=None, retries=4):
    """Number of roots of D inside the rectangle ``region`` (with multiplicity).

    A root sitting on the contour makes the count ill-defined; the rectangle
    is then pushed outwards by a few multiples of 1e-5 of its size and the
    count repeated before giving up.
    """
    ev = evaluator or _Evaluator(setup, k)
    return _count_with_retry(ev, region, retries)[1]


def count_roots_half_disk(setup, k, center, radius, *, eta_floor=ETA_FLOOR, evaluator=None):
    """Number of roots in {|c - center| <= radius, Im c >= eta_floor}."""
    if radius <= eta_floor:
        return 0
    ev = evaluator or _Evaluator(setup, k)
    half = math.sqrt(radius ** 2 - eta_floor ** 2)
    th0 = math.asin(eta_floor / radius)
    base = complex(center, eta_floor)
    paths = [_line(base - half, base + half), _arc(complex(center, 0.0), radius, th0, math.pi - th0)]
    return _winding(ev, paths)


def _newton(ev, z0, region, *, max_iter=60):
    """Newton on the pole-free residual with a central-difference slope."""
    z = complex(z0)
    # small margin only: beyond the cell Newton may lock onto a neighbour or
    # cross the real axis where the residual stops being analytic
    pad = 0.05 * region.diameter + 1e-12
    for it in range(1, max_iter + 1):
        h = 1e-6 * (1 + abs(z))
        f, _ = ev([z, z + h, z - h])
        df = (f[1] - f[2]) / (2 * h)
        if df == 0 or not np.isfinite(df):
            return None, it
        step = f[0] / df
        z_new = z - step
        if not region.contains(z_new, pad) or z_new.imag < 0.5 * region.eta_floor:
            return None, it
        z = z_new
        if abs(step) <= 1e-14 * (1 + abs(z)):
            break
    return complex(z), it


def _polish(ev, z0, region, multiplicity):
    """Newton from ``z0``; None unless it converges to a point of ``region``."""
    z, it = _newton(ev, z0, region)
    if z is None or not region.contains(z, 1e-9 * (1 + abs(z))):
        return None
    res = abs(ev.residual(z))
    if res > ev.threshold and multiplicity == 1:
        return None
    return z, res, it


def _split(region, attempt):
    (a, b), (c, d) = region.re_interval, region.im_interval
    # deterministic off-centre cut so edges avoid symmetric root positions
    jx = JITTER * (1 + 0.37 * attempt) * (b - a)
    jy = JITTER * (1 + 0.61 * attempt) * (d - c)
    xm = 0.5 * (a + b) + jx
    ym = 0.5 * (c + d) + jy
    src, eta = region.source, region.eta_floor
    return [
        SearchRegion((a, xm), (c, ym), src, eta),
        SearchRegion((xm, b), (c, ym), src, eta),
        SearchRegion((a, xm), (ym, d), src, eta),
        SearchRegion((xm, b), (ym, d), src, eta),
    ]


def _jittered(region, attempt):
    (a, b), (c, d) = region.re_interval, region.im_interval
    e = JITTER * (attempt + 1) * max(b - a, d - c, 1e-12)
    return SearchRegion((a - e, b + 0.7 * e), (max(region.eta_floor, c - 0.3 * e), d + 0.9 * e),
                        region.source, region.eta_floor)


def _count_with_retry(ev, region, retries=4):
    last = None
    for attempt in range(retries):
        reg = region if attempt == 0 else _jittered(region, attempt)
        try:
            return reg, _count_rect(ev, reg)
        except BoundaryRootSuspected as exc:
            last = exc
    raise last


def find_modes(setup, k, region=None, *, verify_identities=True):
    """All roots of D in ``region`` (default: the semicircle box)."""
    region = region or SearchRegion.semicircle(setup, k)
    if region.empty:
        return ModeCatalog(k=k, roots=(), counted=0, region=region)
    ev = _Evaluator(setup, k)
    region, total = _count_with_retry(ev, region)
    found = []
    stack = [(region, total, 0)]
    while stack:
        cell, n, depth = stack.pop()
        if n == 0:
            continue
        small = cell.diameter < 1e-9 * (1 + abs(cell.center))
        last = depth >= MAX_DEPTH or small
        if n == 1 or last:
            polished = _polish(ev, cell.center, cell, n)
            if polished is not None:
                z, res, it = polished
                found.append(RootEntry(c=z, abs_residual=res, multiplicity=n, newton_iterations=it))
                continue
            if last:
                raise NonConvergence(
                    f"Newton failed in cell {cell.re_interval} x {cell.im_interval}")
        for attempt in range(4):
            try:
                subs = _split(cell, attempt)
                counts = [_count_rect(ev, s) for s in subs]
            except BoundaryRootSuspected:
                continue
            if sum(counts) == n:
                break
        else:
            raise NonConvergence(f"subdivision lost roots in cell {cell}")
        stack.extend((s, m, depth + 1) for s, m in zip(subs, counts))

    roots = []
    for r in sorted(found, key=lambda e: (e.c.real, e.c.imag)):
        if roots and abs(r.c - roots[-1].c) <= DEDUP * (1 + abs(r.c)):
            prev = roots.pop()
            r = RootEntry(prev.c, prev.abs_residual, prev.multiplicity + r.multiplicity,
                          prev.newton_iterations)
        roots.append(r)
    if sum(r.multiplicity for r in roots) != total:
        raise NonConvergence("catalog does not match the winding count")

    if verify_identities:
        from .semicircle import verify_mode

        checked = []
        for r in roots:
            defects = verify_mode(setup, Mode(k, r.c))
            checked.append(RootEntry(r.c, r.abs_residual, r.multiplicity,
                                     r.newton_iterations, defects))
        roots = checked
    return ModeCatalog(k=k, roots=tuple(roots), counted=total, region=region)


@dataclass(frozen=True)
class AbsenceReport:
    confirmed_absent: bool
    count: int
    center: float
    radius: float
    found: tuple = field(default=())


def verify_no_unstable_near(setup, k, center, radius=None, *, eta_floor=ETA_FLOOR):
    """Check that no root with Im c >= eta_floor lies in the half-disk around ``center``.

    The default radius is half the distance from ``center`` to the outer range;
    a center inside that range (where a critical layer can destabilise) needs
    an explicit radius.
    """
    m, M = setup.profile_minus.value_range()
    dist = max(m - center, center - M)
    if radius is None:
        if dist <= 0:
            raise InvalidInput(f"center {center} lies inside the outer range [{m}, {M}]")
        radius = 0.5 * dist
    ev = _Evaluator(setup, k)
    n = count_roots_half_disk(setup, k, center, radius, eta_floor=eta_floor, evaluator=ev)
    found = ()
    if n:
        box = SearchRegion((center - radius, center + radius), (eta_floor, radius))
        cat = find_modes(setup, k, box, verify_identities=False)
        found = tuple(Mode(k, r.c) for r in cat.roots if abs(r.c - center) <= radius)
    return AbsenceReport(n == 0, n, center, radius, found)
