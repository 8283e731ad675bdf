"""Adaptive Dormand-Prince 5(4) integrator with dense output.

Works on real or complex state arrays of any shape and integrates in either
direction. Besides the usual tolerance-based step control it supports

* ``breakpoints``: abscissae the stepper must land on exactly,
* ``step_cap``: a position-dependent upper bound on the step length,
* ``fixed_step``: disables adaptivity (used for order checks).
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.integrate._ivp.rk import RK45

from .errors import IntegratorFailure

# Butcher tableau, error weights and dense-output matrix of DOPRI5.
_A = RK45.A
_B = RK45.B
_C = RK45.C
_E = RK45.E
_P = RK45.P
_ORDER = 5

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 5.0


@dataclass
class Solution:
    t: np.ndarray
    y: np.ndarray
    nfev: int = 0
    naccept: int = 0
    nreject: int = 0
    _steps: list = field(default_factory=list, repr=False)
    _packed: tuple = field(default=None, repr=False)

    @property
    def y_end(self):
        return self.y[-1]

    def __call__(self, tq):
        """Evaluate the continuous extension at ``tq`` (scalar or 1-D array)."""
        if not self._steps:
            raise ValueError("integration was run without dense=True")
        if self._packed is None:
            t_old = np.array([s[0] for s in self._steps])
            h = np.array([s[1] for s in self._steps])
            y_old = np.array([s[2] for s in self._steps])
            Q = np.array([s[3] for s in self._steps])
            self._packed = (t_old, h, y_old, Q)
        t_old, h, y_old, Q = self._packed
        tq = np.atleast_1d(np.asarray(tq, dtype=float))
        direction = 1.0 if self.t[-1] >= self.t[0] else -1.0
        key = direction * self.t
        idx = np.searchsorted(key, direction * tq, side="right") - 1
        idx = np.clip(idx, 0, len(self._steps) - 1)
        x = (tq - t_old[idx]) / h[idx]
        p = np.stack([x, x * x, x ** 3, x ** 4], axis=1)
        shape = y_old.shape[1:]
        Qi = Q[idx].reshape(len(tq), 4, -1)
        incr = np.einsum("ij,ijk->ik", p, Qi).reshape((len(tq),) + shape)
        hb = h[idx].reshape((-1,) + (1,) * len(shape))
        return y_old[idx] + hb * incr


def _norm(err, y0, y1, rtol, atol):
    scale = atol + rtol * np.maximum(np.abs(y0), np.abs(y1))
    return float(np.max(np.abs(err) / scale))


def dopri(fun, t0, t1, y0, *, rtol=1e-10, atol=1e-12, h0=None,
          max_step=np.inf, step_cap=None, breakpoints=(), fixed_step=None,
          dense=False, record=True, max_steps=500_000):
    """Integrate ``y' = fun(t, y)`` from ``t0`` to ``t1``.

    Returns a :class:`Solution` whose ``t``/``y`` hold every accepted node
    (or only the two end points when ``record`` is false).
    """
    y0 = np.asarray(y0)
    shape = y0.shape
    y = np.array(y0, dtype=complex if np.iscomplexobj(y0) else float).ravel()
    user_fun = fun

    def fun(t, yf):
        return np.asarray(user_fun(t, yf.reshape(shape))).ravel()

    t0 = float(t0)
    t1 = float(t1)
    sol = Solution(t=np.array([t0]), y=y.reshape((1,) + shape).copy())
    if t1 == t0:
        return sol
    direction = 1.0 if t1 > t0 else -1.0
    span = abs(t1 - t0)

    stops = sorted({float(b) for b in breakpoints
                    if direction * (b - t0) > 0 and direction * (t1 - b) > 0},
                   key=lambda b: direction * b)
    stops.append(t1)

    if fixed_step is not None:
        h = float(fixed_step)
    elif h0 is not None:
        h = float(h0)
    else:
        h = min(max_step, 1e-2 * span)
    h = min(h, max_step)

    ts = [t0]
    ys = [y.copy()]
    K = np.empty((7,) + y.shape, dtype=y.dtype)
    t = t0
    f0 = fun(t, y)
    nfev = 1
    steps = 0
    stop_idx = 0
    tiny = 1e-14 * max(1.0, abs(t0), abs(t1))

    while True:
        target = stops[stop_idx]
        remaining = abs(target - t)
        if remaining <= tiny:
            t = target
            stop_idx += 1
            if stop_idx == len(stops):
                break
            continue

        hh = min(h, max_step)
        if step_cap is not None:
            hh = min(hh, float(step_cap(t)))
        land = hh >= remaining
        if land:
            hh = remaining
        elif fixed_step is None and hh > 0.5 * remaining:
            # avoid leaving a sliver before the next stop
            hh = 0.5 * remaining

        step_rejected = False
        while True:
            steps += 1
            if steps > max_steps:
                raise IntegratorFailure(f"step budget exhausted at t={t:.6g}")
            if hh < 1e-15 * max(1.0, abs(t)):
                raise IntegratorFailure(f"step size underflow at t={t:.6g}")
            dt = direction * hh
            K[0] = f0
            for s in range(1, 6):
                K[s] = fun(t + _C[s] * dt, y + dt * (_A[s, :s] @ K[:s]))
            y_new = y + dt * (_B @ K[:6])
            t_new = target if land else t + dt
            f_new = fun(t_new, y_new)
            K[6] = f_new
            nfev += 6
            if fixed_step is not None:
                break
            err = dt * (_E @ K)
            en = _norm(err, y, y_new, rtol, atol)
            if en <= 1.0:
                if en == 0.0:
                    factor = MAX_FACTOR
                else:
                    factor = min(MAX_FACTOR, SAFETY * en ** (-1.0 / _ORDER))
                if step_rejected:
                    factor = min(1.0, factor)
                h = hh * factor
                break
            step_rejected = True
            sol.nreject += 1
            hh = hh * max(MIN_FACTOR, SAFETY * en ** (-1.0 / _ORDER))
            land = False

        if dense:
            Q = _P.T @ K
            sol._steps.append((t, dt, y.reshape(shape), Q.reshape((4,) + shape)))
        t = t_new
        y = y_new
        f0 = f_new
        sol.naccept += 1
        if record:
            ts.append(t)
            ys.append(y.copy())
        if not np.all(np.isfinite(y)):
            raise IntegratorFailure(f"non-finite state at t={t:.6g}")

    if not record:
        ts.append(t)
        ys.append(y.copy())
    sol.t = np.array(ts)
    sol.y = np.array(ys).reshape((len(ys),) + shape)
    sol.nfev = nfev
    return sol


_A_L = [[float(x) for x in row] for row in _A]
_B_L = [float(x) for x in _B]
_C_L = [float(x) for x in _C]
_E_L = [float(x) for x in _E]


def dopri_linear2(q, t0, t1, z, v, *, rtol=1e-10, atol=1e-12, step_cap=None,
                  breakpoints=(), max_steps=2_000_000):
    """DOPRI5 for ``z' = v, v' = q(t) z`` with complex scalars.

    Same step control as :func:`dopri` but on plain python numbers, which
    is much faster when a single trajectory needs many small steps.
    Returns ``(z, v, naccept)`` at ``t1``.
    """
    t0 = float(t0)
    t1 = float(t1)
    if t1 == t0:
        return complex(z), complex(v), 0
    z = complex(z)
    v = complex(v)
    direction = 1.0 if t1 > t0 else -1.0
    span = abs(t1 - t0)
    stops = sorted({float(b) for b in breakpoints
                    if direction * (b - t0) > 0 and direction * (t1 - b) > 0},
                   key=lambda b: direction * b)
    stops.append(t1)
    A, B, C, E = _A_L, _B_L, _C_L, _E_L
    h = 1e-2 * span
    t = t0
    kz0 = v
    kv0 = q(t) * z
    steps = naccept = 0
    stop_idx = 0
    tiny = 1e-14 * max(1.0, abs(t0), abs(t1))
    inv_order = -1.0 / _ORDER
    while True:
        target = stops[stop_idx]
        remaining = abs(target - t)
        if remaining <= tiny:
            t = target
            stop_idx += 1
            if stop_idx == len(stops):
                break
            continue
        hh = h
        if step_cap is not None:
            hh = min(hh, step_cap(t))
        land = hh >= remaining
        if land:
            hh = remaining
        elif hh > 0.5 * remaining:
            hh = 0.5 * remaining
        rejected = False
        while True:
            steps += 1
            if steps > max_steps:
                raise IntegratorFailure(f"step budget exhausted at t={t:.6g}")
            if hh < 1e-15 * max(1.0, abs(t)):
                raise IntegratorFailure(f"step size underflow at t={t:.6g}")
            dt = direction * hh
            kz = [kz0, 0, 0, 0, 0, 0, 0]
            kv = [kv0, 0, 0, 0, 0, 0, 0]
            for s in range(1, 6):
                row = A[s]
                zs = z
                vs = v
                for j in range(s):
                    a = row[j] * dt
                    zs += a * kz[j]
                    vs += a * kv[j]
                kz[s] = vs
                kv[s] = q(t + C[s] * dt) * zs
            zn = z + dt * (B[0] * kz[0] + B[2] * kz[2] + B[3] * kz[3] + B[4] * kz[4] + B[5] * kz[5])
            vn = v + dt * (B[0] * kv[0] + B[2] * kv[2] + B[3] * kv[3] + B[4] * kv[4] + B[5] * kv[5])
            tn = target if land else t + dt
            kz[6] = vn
            kv[6] = q(tn) * zn
            ez = dt * sum(E[j] * kz[j] for j in range(7))
            ev = dt * sum(E[j] * kv[j] for j in range(7))
            en = max(abs(ez) / (atol + rtol * max(abs(z), abs(zn))),
                     abs(ev) / (atol + rtol * max(abs(v), abs(vn))))
            if en <= 1.0:
                factor = MAX_FACTOR if en == 0.0 else min(MAX_FACTOR, SAFETY * en ** inv_order)
                if rejected:
                    factor = min(1.0, factor)
                h = hh * factor
                break
            rejected = True
            hh *= max(MIN_FACTOR, SAFETY * en ** inv_order)
            land = False
        t, z, v = tn, zn, vn
        kz0, kv0 = kz[6], kv[6]
        naccept += 1
        if not (math.isfinite(abs(z)) and math.isfinite(abs(v))):
            raise IntegratorFailure(f"non-finite state at t={t:.6g}")
    return z, v, naccept
