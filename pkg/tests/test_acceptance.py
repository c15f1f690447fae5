"""Acceptance criteria, one test each.

Every test prints a single ``PASS``/``FAIL`` line (bypassing output capture)
before asserting, so ``pytest tests/test_acceptance.py`` doubles as a report.
Run with ``-s`` or look at the terminal output for the lines.
"""

import math

import numpy as np
import pytest

from impulsive_duffing.energy_geometry import tau, tau_flow_oracle
from impulsive_duffing.impulsive_flow import DEFAULT_SETTINGS, LiftedState, apply_impulse, evolve
from impulsive_duffing.models import Forcing, ImpulseSchedule, ImpulsiveSystem, make_linear, make_semilinear
from impulsive_duffing.orbits import find_fixed_points, verify_orbit
from impulsive_duffing.poincare import fd_jacobian, jacobian, map_point
from impulsive_duffing.twist import AnnulusSpec, gamma_star, gap_profile, pick_m, tau_scan, twist_check

PI = math.pi
T1 = PI / 2


@pytest.fixture
def report(capsys):
    def _report(number, title, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} -- {detail}")
        assert ok, detail

    return _report


@pytest.fixture(scope="module")
def systems():
    g = make_semilinear()
    imp = ImpulseSchedule(T1)
    auto = ImpulsiveSystem(g, None, imp)
    return {
        "linear": ImpulsiveSystem(make_linear(), None, imp),
        "auto": auto,
        "forced": auto.with_forcing(Forcing(0.0, (0.1,))),
    }


@pytest.fixture(scope="module")
def scan(systems):
    return tau_scan(systems["auto"].g, 1e2, 1e6, 200, (1, 2, 3, 4, 5, 6, 7))


def _random_states(seed, n, lo, hi):
    rng = np.random.default_rng(seed)
    r = 10 ** rng.uniform(math.log10(lo), math.log10(hi), n)
    th = rng.uniform(0.0, 2 * PI, n)
    return np.column_stack([r * np.cos(th), r * np.sin(th)])


def test_criterion_1_linear_example(systems, report):
    lin = systems["linear"]
    xs = np.linspace(-2.0, 2.0, 10)
    e1 = e2 = 0.0
    for x0 in xs:
        for y0 in xs:
            p1 = map_point(lin, (x0, y0))
            p2 = map_point(lin, p1)
            e1 = max(e1, float(np.max(np.abs(p1 - (-x0, y0)))))
            e2 = max(e2, float(np.max(np.abs(p2 - (x0, y0)))))
    band = AnnulusSpec(a=0.125, b=2.0, m=1, alpha=0.0)
    recs = find_fixed_points(lin, band, (3, 8))
    worst_x = max((abs(r.point[0]) for r in recs), default=math.inf)
    ok = e1 < 1e-7 and e2 < 1e-7 and recs and worst_x < 1e-6
    report(1, "linear worked example", ok, f"max|P-(-x,y)|={e1:.2e}, max|P^2-id|={e2:.2e}, {len(recs)} roots, max|x|={worst_x:.2e}")


def test_criterion_2_period_function(systems, report):
    lin = make_linear()
    lin_err = max(abs(tau(lin, c) / (2 * PI) - 1) for c in (1e-2, 1.0, 1e2, 1e4))
    g = systems["auto"].g
    levels = np.logspace(2, 6, 50)
    rel = max(abs(tau(g, c) - tau_flow_oracle(g, c)) / tau(g, c) for c in levels)
    ok = lin_err <= 1e-8 and rel <= 1e-6
    report(2, "period function", ok, f"linear rel err {lin_err:.1e}, semilinear vs flow oracle max rel {rel:.1e} at 50 levels")


def test_criterion_3_conservation_and_impulse(systems, report):
    worst = 0.0
    for name in ("linear", "auto"):
        sys_ = systems[name]
        for x, y in _random_states(3, 40, 1.0, 1e4):
            _, d = evolve(sys_, LiftedState.at(0.0, x, y), (0.0, 2 * PI))
            worst = max(worst, d.energy_drift / max(1.0, sys_.g.energy(x, y)))
    g = systems["auto"].g
    jump = 0.0
    for x, y in _random_states(4, 200, 1e-3, 1e6):
        s = apply_impulse(LiftedState.at(T1, x, y))
        jump = max(jump, abs(g.energy(s.x, s.y) - g.energy(x, y)))
    ok = worst <= 1e-8 and jump == 0.0
    report(3, "conservation and impulse geometry", ok, f"max |V-V0|/max(1,V0) = {worst:.2e}; max impulse change of V = {jump:g}")


def test_criterion_4_area_preservation(systems, report):
    dets = []
    for name in ("auto", "forced"):
        for z in _random_states(5 if name == "auto" else 6, 100, 1.0, 100.0):
            dets.append(float(np.linalg.det(jacobian(systems[name], z))))
    dets = np.array(dets)
    det_err = float(np.max(np.abs(dets - 1.0)))
    fd_err = 0.0
    for i, z in enumerate(_random_states(7, 20, 1.0, 100.0)):
        sys_ = systems["auto" if i % 2 == 0 else "forced"]
        J, F = jacobian(sys_, z), fd_jacobian(sys_, z)
        fd_err = max(fd_err, float(np.max(np.abs(J - F)) / np.max(np.abs(J))))
    ok = det_err < 1e-6 and fd_err <= 1e-4
    report(
        4, "area preservation", ok,
        f"max|det-1| = {det_err:.3g} (det in [{dets.min():.9f}, {dets.max():.9f}]), "
        f"max||det|-1| = {np.max(np.abs(np.abs(dets) - 1)):.1e}, variational vs FD rel {fd_err:.1e}",
    )


def test_criterion_5_twist(systems, scan, report):
    m = pick_m(scan)
    annuli = [a for a in scan if a.m == m]
    pairs = sum(a.kind == "A" for a in annuli)
    reports = [twist_check(systems["auto"], a, 64) for a in annuli]
    all_pass = bool(reports) and all(r.passed for r in reports)
    stable = True
    for a, r in zip(annuli[:2], reports[:2]):
        doubled = twist_check(systems["auto"], a, 128).verdict
        tight = twist_check(systems["auto"], a, 64, DEFAULT_SETTINGS.tightened(10.0)).verdict
        stable &= r.verdict == doubled == tight
    b1 = [round(r.beta1, 3) for r in reports]
    b2 = [round(r.beta2, 3) for r in reports]
    ok = m is not None and pairs >= 3 and all_pass and stable
    report(5, "twist realization", ok, f"m={m}, {pairs} annulus pairs, beta1={b1}, beta2={b2}, verdict stable={stable}")


def test_criterion_6_periodic_solutions(systems, scan, report):
    m = pick_m(scan)
    annuli = [a for a in scan if a.m == m][:3]
    counts = []
    periods_ok = True
    for a in annuli:
        recs = find_fixed_points(systems["auto"], a, (2, 4))
        counts.append(len(recs))
        periods_ok &= all(verify_orbit(systems["auto"], r, 2).min_period_factor == 1 for r in recs[:4])
    forced = find_fixed_points(systems["forced"], annuli[0], (2, 4))
    periods_ok &= all(verify_orbit(systems["forced"], r, 2).min_period_factor == 1 for r in forced)
    ok = len(annuli) >= 3 and all(c >= 2 for c in counts) and len(forced) >= 2 and periods_ok
    report(6, "periodic solutions", ok, f"autonomous roots per annulus {counts}, forced roots {len(forced)}, all period 1: {periods_ok}")


def test_criterion_7_gap(systems, report):
    gammas = [1e2, 1e3, 1e4, 1e5]
    prof = gap_profile(systems["forced"], systems["auto"], gammas, 64)
    star = gamma_star(prof, 0.1)
    zero = gap_profile(systems["auto"], systems["auto"], gammas, 16)
    gaps = dict(prof)
    ok = gaps[1e5] < gaps[1e2] and star is not None and all(g == 0.0 for _, g in zero)
    report(7, "winding gap", ok, f"gaps {[f'{g:.2e}' for _, g in prof]}, gamma*={star}, p=0 gaps all zero={all(g == 0.0 for _, g in zero)}")


def test_criterion_8_winding_convention(systems, report):
    lin = systems["linear"]
    s0 = LiftedState.at(0.0, 1.0, 0.0)
    _, d = evolve(lin, s0, (0.0, 2 * PI))
    _, d_free = evolve(lin.with_impulse(None), s0, (0.0, 2 * PI))
    e1, e2 = abs(d.winding + 3 * PI), abs(d_free.winding + 2 * PI)
    ok = e1 <= 1e-6 and e2 <= 1e-8
    report(8, "winding convention", ok, f"|winding+3pi|={e1:.1e}, |winding+2pi| without impulse={e2:.1e}")
