"""Acceptance criteria, one test each; every test prints a CRITERION line."""

import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from circstab import critical_layer as cl
from circstab import dispersion as dp
from circstab.mode_search import SearchRegion, find_modes, verify_no_unstable_near
from circstab.profiles import ProblemSetup, TanhShear, TaylorCouette
from circstab.rayleigh_bvp import Mode, shoot_interface
from circstab.semicircle import bound

from conftest import SQRT15, vortex_setup, wind_setup

ROOT = Path(__file__).resolve().parents[1]
IDENTITY_TOL = 1e-6


def report(n, ok, detail):
    print(f"\nCRITERION {n}: {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, detail


def max_defect(catalogs):
    worst = 0.0
    for cat in catalogs:
        for r in cat.roots:
            worst = max(worst, *r.identity_defects)
    return worst


@pytest.fixture(scope="module")
def vortex_catalogs():
    t0 = time.perf_counter()
    cats = [find_modes(vortex_setup(), k) for k in range(2, 9)]
    return cats, time.perf_counter() - t0


def _annulus_draw(g):
    k = int(g.integers(2, 7))
    p = dict(k=k, A=g.uniform(-0.3, 0.3), B=g.uniform(-1, 1), a=g.uniform(-0.3, 0.3),
             b=g.uniform(-1, 1), r_in=g.uniform(0.3, 0.8), r_out=g.uniform(1.5, 4.0),
             epsilon=g.uniform(0.0, 1.0), alpha=g.uniform(0.0, 1.0))
    setup = ProblemSetup(rho_plus=1.0, rho_minus=p["epsilon"], alpha=p["alpha"],
                         r_in=p["r_in"], r_out=p["r_out"],
                         profile_plus=TaylorCouette(A=p["A"], B=p["B"]),
                         profile_minus=TaylorCouette(A=p["a"], B=p["b"]))
    return p, setup


@pytest.fixture(scope="module")
def annulus_runs():
    g = np.random.default_rng(2024)
    runs = []
    while len(runs) < 50:
        p, setup = _annulus_draw(g)
        rep = bound(setup, p["k"])
        if not rep.condition_strict:
            continue
        # search well beyond the disk so that escapees would be seen
        pad = rep.radius + 0.5
        box = SearchRegion((rep.center - pad, rep.center + pad), (0.0, pad))
        runs.append((p, rep, find_modes(setup, p["k"], box)))
    return runs


def test_criterion_1_constant_vortex(vortex_catalogs):
    cats, elapsed = vortex_catalogs
    worst, counts = 0.0, []
    for k, cat in zip(range(2, 9), cats):
        counts.append(len(cat.roots))
        exact = complex(1 - 1 / k, math.sqrt((1 / k) * (1 - 1 / k)))
        for r in cat.roots:
            worst = max(worst, abs(r.c - exact))
    ok = all(n == 1 for n in counts) and worst <= 1e-8 and elapsed <= 5.0
    report(1, ok, f"roots per k={counts} max|c-exact|={worst:.2e} time={elapsed:.2f}s")


def test_criterion_2_capillary_stabilization():
    g = np.random.default_rng(7)
    t0 = time.perf_counter()
    found = 0
    pairs = []
    for _ in range(20):
        B = g.uniform(-2, 2)
        alpha = B * B / 6 * (1 + g.uniform(0.05, 2.0))
        pairs.append((alpha, B))
        setup = vortex_setup(B=B, alpha=alpha)
        for k in range(2, 65):
            found += find_modes(setup, k, verify_identities=False).counted
    elapsed = time.perf_counter() - t0
    ok = found == 0 and elapsed <= 30.0
    report(2, ok, f"20 pairs x k=2..64 unstable={found} time={elapsed:.2f}s")


def test_criterion_3_shooting_vs_closed_form():
    g = np.random.default_rng(3)
    cases = [(0.5, 2)] + [(g.uniform(0.05, 0.95), int(g.integers(1, 16))) for _ in range(99)]
    worst = 0.0
    for r_in, k in cases:
        setup = ProblemSetup(rho_plus=1.0, rho_minus=0.0, alpha=0.0, r_in=r_in, r_out=math.inf,
                             profile_plus=TaylorCouette(A=g.uniform(-0.5, 0.5),
                                                        B=g.uniform(-1, 1)),
                             profile_minus=TaylorCouette(A=0.0, B=0.0))
        c = complex(g.uniform(-2, 2), g.uniform(0.05, 1))
        y0, y1 = shoot_interface(setup, "plus", k, np.array([c]))
        p = r_in ** (2 * k)
        worst = max(worst, abs(y1[0] / y0[0] - k * (1 + p) / (1 - p)))
    y0, y1 = shoot_interface(ProblemSetup(
        rho_plus=1.0, rho_minus=0.0, alpha=0.0, r_in=0.5, r_out=math.inf,
        profile_plus=TaylorCouette(A=0.2, B=0.3), profile_minus=TaylorCouette(A=0.0, B=0.0)),
        "plus", 2, np.array([0.4 + 0.3j]))
    gap = abs(y1[0] / y0[0] - 34 / 15)
    report(3, worst <= 1e-8 and gap <= 1e-8,
           f"100 cases max error={worst:.2e} |zeta'(0)-34/15|={gap:.2e}")


def test_criterion_4_quiescent_stability():
    g = np.random.default_rng(4)
    unstable, min_disc = 0, math.inf
    for i in range(12):
        B = g.uniform(0.2, 1.5) * g.choice([-1, 1])
        p = dict(A=-B, B=B, alpha=0.0 if i < 3 else g.uniform(0, 2),
                 r_in=g.uniform(0.3, 0.8))
        setup = dp.oracle_setup("TCWaterWave", p)
        for k in (2, 3, 5, 8):
            p["k"] = k
            F = dp._ratio(p["r_in"], k)
            min_disc = min(min_disc, p["alpha"] * (k * k - 1) + F * B * B)
            unstable += find_modes(setup, k, verify_identities=False).counted
    ok = unstable == 0 and min_disc >= 0
    report(4, ok, f"48 cases unstable={unstable} min discriminant={min_disc:.3e}")


def test_criterion_5_semicircle_containment(annulus_runs):
    violations, roots, mismatched = 0, 0, 0
    for p, rep, cat in annulus_runs:
        for r in cat.roots:
            roots += 1
            if not rep.contains(r.c):
                violations += 1
        G, center, rhs = dp.two_phase_tc_terms(p)
        expected = int(rhs < 0 and math.sqrt(-rhs / G) >= cat.region.eta_floor)
        mismatched += cat.counted != expected
    ok = violations == 0 and mismatched == 0
    report(5, ok, f"50 setups unstable roots={roots} outside disk={violations} "
                  f"count disagreements with closed form={mismatched}")


def test_criterion_6_identities(vortex_catalogs, annulus_runs, wind):
    cats = list(vortex_catalogs[0]) + [cat for _, _, cat in annulus_runs]
    sol = cl.solve_unstable_mode(wind, 2, 1, 1e-3)
    c = sol.c_final
    cats.append(find_modes(wind, 2, SearchRegion((c.real - 5e-4, c.real + 5e-4),
                                                 (1e-6, c.imag + 5e-4))))
    n = sum(len(cat.roots) for cat in cats)
    worst = max_defect(cats)
    report(6, n > 0 and worst <= IDENTITY_TOL, f"{n} modes max relative defect={worst:.2e}")


def test_criterion_7_pythagorean(wind):
    g = np.random.default_rng(8)
    worst = 0.0
    for _ in range(20):
        c = complex(g.uniform(0.0, 1.5), 10 ** g.uniform(-4, 0))
        st = cl.integrate_full(wind, Mode(int(g.integers(1, 6)), c))
        worst = max(worst, float(np.max(st.pythagorean_defect() / (1 + st.xi1 * st.xi3))))
    report(7, worst <= 1e-8, f"20 traces max scaled defect={worst:.2e}")


def test_criterion_8_limit_convergence(wind):
    cfg = cl.CriticalLayerConfig(mu=0.9)
    lim = cl.integrate_limit(wind, SQRT15, 1, k=2, config=cfg)
    errs = [abs(cl.integrate_full(wind, Mode(2, complex(SQRT15, e))).phi0 - lim.phi0)
            for e in cfg.eta_grid]
    slope = float(np.polyfit(np.log(cfg.eta_grid), np.log(errs), 1)[0])
    report(8, slope >= 0.8, f"rate exponent={slope:.3f} errors={[f'{e:.2e}' for e in errs]}")


def test_criterion_9_critical_layer_pipeline(wind):
    pred = cl.predict_bifurcation(wind, 2, 1)
    sol = cl.solve_unstable_mode(wind, 2, 1, 1e-3, prediction=pred)
    c = sol.c_final
    lo, hi = 0.5 * 1e-3 * pred.c_sharp, 2 * 1e-3 * pred.c_sharp
    box = SearchRegion((c.real - 5e-4, c.real + 5e-4), (max(1e-6, c.imag - 5e-4),
                                                        c.imag + 5e-4))
    cat = find_modes(wind, 2, box)
    agree = cat.counted == 1 and abs(cat.roots[0].c - c) <= 1e-6
    ok = sol.accepted and lo <= c.imag <= hi and agree
    report(9, ok, f"c={c:.10f} c_sharp={pred.c_sharp:.6f} band=[{lo:.3e},{hi:.3e}] "
                  f"box count={cat.counted}")


def test_criterion_10_sqrt_epsilon_scaling():
    p = dict(k=2, alpha=1.0, B=0.0, omega_star=3.0, b=0.0)
    st = cl.epsilon_scaling_study(p, list(np.logspace(-6, -2, 9)))
    ok = (abs(st.slope - 0.5) <= 0.05 and abs(st.lambda_plus - SQRT15) <= 1e-9
          and st.separation > 0)
    report(10, ok, f"slope={st.slope:.4f} lambda_plus={st.lambda_plus:.6f} "
                   f"s*={st.s_star:.6f} min separation={st.separation:.4f}")


def test_criterion_11_necessity():
    counts = []
    for eps in (1e-4, 1e-3):
        setup = ProblemSetup(rho_plus=1.0, rho_minus=eps, alpha=1.0, r_in=0.0, r_out=math.e,
                             profile_plus=TaylorCouette(A=0.0, B=1.0),
                             profile_minus=TanhShear(base=5.0, amplitude=0.5, center=0.5,
                                                     width=0.2))
        m, M = setup.profile_minus.value_range()
        exp = dp.small_density_expansion(setup, 2)
        for c in (exp.c_plus_k, exp.c_minus_k):
            assert not m <= c <= M
            counts.append(verify_no_unstable_near(setup, 2, c).count)
    report(11, all(n == 0 for n in counts), f"counts at c+/c- for eps 1e-4,1e-3: {counts}")


def test_criterion_12_determinism(tmp_path):
    configs = sorted((ROOT / "configs").glob("*.yaml"))
    same = []
    for cfg in configs:
        outs = []
        for run in range(2):
            out = tmp_path / f"{cfg.stem}.{run}"
            res = subprocess.run([sys.executable, "-m", "circstab", "--config", str(cfg),
                                  "--out", str(out), "--threads", str(1 + 2 * run)],
                                 capture_output=True, text=True)
            assert res.returncode == 0, res.stderr
            outs.append(out.read_bytes())
        same.append(outs[0] == outs[1])
    report(12, all(same), f"{len(configs)} configs bit-identical={same}")
