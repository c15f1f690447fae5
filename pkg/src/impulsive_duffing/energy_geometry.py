"""Level curves of the energy ``V(x, y) = y^2/2 + G(x)`` of ``x'' + g(x) = 0``.

Intercepts, the period function and curve sampling are all computed from the
closed-form ``G``.  ``tau_flow_oracle`` is an independent check of the period
that integrates the autonomous flow instead of doing any quadrature.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from .models import TWO_PI, GField

log = logging.getLogger(__name__)

DEFAULT_FLOOR = 1.0


class LevelError(ValueError):
    """A requested energy level is not a closed star-shaped curve."""


@dataclass(frozen=True)
class EnergyCurve:
    c: float
    h: float
    h1: float
    tau: float
    c0_floor: float


def _solve_G(g: GField, c: float, sign: float) -> float:
    """Positive ``r`` with ``G(sign * r) = c`` by bracketing, then Newton polish."""
    f = lambda r: g.antideriv(sign * r) - c
    hi = math.sqrt(2.0 * c / g.K) if g.K > 0 else 1.0
    lo = 0.0
    for _ in range(2000):
        if f(hi) >= 0:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise LevelError(f"no intercept bracket for c={c}")
    if lo == 0.0 and f(hi) == 0.0:
        return hi
    r = optimize.brentq(f, lo, hi, xtol=1e-15 * max(1.0, hi), rtol=4 * np.finfo(float).eps, maxiter=500)
    for _ in range(3):
        dg = sign * g.eval(sign * r)
        if dg == 0:
            break
        step = f(r) / dg
        if not math.isfinite(step) or abs(step) > 1e-6 * max(r, 1.0):
            break
        r -= step
    return r


def intercepts(g: GField, c: float) -> tuple[float, float]:
    """``(h, h1)`` with ``G(h) = G(-h1) = c`` and ``h, h1 > 0``."""
    if c <= 0:
        raise LevelError("energy level must be positive")
    h = _solve_G(g, c, 1.0)
    h1 = _solve_G(g, c, -1.0)
    tol = 1e-12 * max(1.0, c)
    if abs(g.antideriv(h) - c) > tol or abs(g.antideriv(-h1) - c) > tol:
        raise LevelError(f"intercept residual above tolerance at c={c}")
    return h, h1


def _invert_G_on(g: GField, target: float, sign: float, lo: float, hi: float, guess: float) -> float:
    """``u`` in ``[lo, hi]`` (positive magnitudes) with ``G(sign*u) = target``."""
    u = min(max(guess, lo), hi)
    for _ in range(30):
        f = g.antideriv(sign * u) - target
        d = sign * g.eval(sign * u)
        step = f / d
        u_new = u - step
        if not (lo <= u_new <= hi):
            break
        u = u_new
        if abs(step) <= 4e-16 * u:
            return u
    return optimize.brentq(lambda v: g.antideriv(sign * v) - target, lo, hi, xtol=1e-15 * hi, rtol=1e-15)


def _half_period(g: GField, c: float, h: float, sign: float, epsrel: float) -> float:
    """``int_0^h du / sqrt(c - G(sign*u))`` for one side of the curve.

    The inner part ``[0, h/2]`` has a bounded integrand.  On ``[h/2, h]`` the
    substitution ``c - G = s**2`` turns ``du/sqrt(c-G)`` into ``2 ds / |g(u)|``
    which is bounded because ``|g| >= |g(h/2)| > 0`` there.
    """
    us = 0.5 * h
    knots = [k for k in g.knots if 0.0 < k < h]

    def inner(u):
        r = c - g.antideriv(sign * u)
        if r <= 0:
            warnings.warn("clamped c - G(u) <= 0 inside the period integral", RuntimeWarning)
            r = max(r, 1e-300)
        return 1.0 / math.sqrt(r)

    s_star = math.sqrt(max(c - g.antideriv(sign * us), 0.0))
    gh = abs(g.eval(sign * h))

    def outer(s):
        target = c - s * s
        u = _invert_G_on(g, target, sign, us, h, h - s * s / gh)
        return 2.0 / abs(g.eval(sign * u))

    inner_pts = [k for k in knots if k < us] or None
    outer_pts = sorted(math.sqrt(max(c - g.antideriv(sign * k), 0.0)) for k in knots if k > us) or None
    limit = 200 + 4 * len(knots)
    a, _ = integrate.quad(inner, 0.0, us, epsabs=0.0, epsrel=epsrel, limit=limit, points=inner_pts)
    b, _ = integrate.quad(outer, 0.0, s_star, epsabs=0.0, epsrel=epsrel, limit=limit, points=outer_pts)
    return a + b


def tau(g: GField, c: float, epsrel: float = 1e-11) -> float:
    """Least period of the autonomous orbit on the level ``V = c``."""
    h, h1 = intercepts(g, c)
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            total = _half_period(g, c, h, 1.0, epsrel) + _half_period(g, c, h1, -1.0, epsrel)
        except integrate.IntegrationWarning as exc:
            raise ArithmeticError(f"period quadrature did not converge at c={c}: {exc}") from exc
    return math.sqrt(2.0) * total


def energy_curve(g: GField, c: float, c0_floor: float = DEFAULT_FLOOR) -> EnergyCurve:
    h, h1 = intercepts(g, c)
    return EnergyCurve(c=c, h=h, h1=h1, tau=tau(g, c), c0_floor=c0_floor)


def tau_flow_oracle(g: GField, c: float, event_tol: float = 1e-10, rtol: float = 1e-12, atol: float = 1e-14) -> float:
    """Period of the orbit on ``V = c`` by time-stepping the autonomous flow.

    Starts at ``(h, 0)`` and stops at the next downward crossing of the
    positive ``x`` half-axis; the crossing time is refined on the dense output.
    """
    h, _ = intercepts(g, c)

    def rhs(t, z):
        return np.array([z[1], -g.eval(z[0])])

    t_max = 10.0 * TWO_PI / math.sqrt(g.A0)
    solver = integrate.DOP853(rhs, 0.0, np.array([h, 0.0]), t_max, rtol=rtol, atol=atol * max(1.0, h))
    prev_y = 0.0
    left = False
    while solver.status == "running":
        solver.step()
        x, y = solver.y
        if not left:
            left = y < 0
        elif prev_y > 0 >= y and x > 0:
            sol = solver.dense_output()
            tr = optimize.brentq(lambda t: sol(t)[1], solver.t_old, solver.t, xtol=event_tol * 1e-3, rtol=1e-15)
            return tr
        prev_y = y
    raise ArithmeticError(f"no return to the positive x-axis within t={t_max}")


def radial_root(g: GField, c: float, theta: float) -> float:
    """Radius where the ray at angle ``theta`` meets ``V = c``."""
    ct, st = math.cos(theta), math.sin(theta)
    f = lambda r: 0.5 * (r * st) ** 2 + g.antideriv(r * ct) - c
    hi = math.sqrt(2.0 * c / max(g.K, 1e-300))
    lo = 0.0
    for _ in range(200):
        if f(hi) >= 0:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise LevelError(f"ray at angle {theta} does not meet the level {c}")
    r = optimize.brentq(f, lo, hi, xtol=1e-15 * hi, rtol=4 * np.finfo(float).eps, maxiter=500)
    # Newton polish along the ray
    for _ in range(2):
        d = r * st * st + g.eval(r * ct) * ct
        if d <= 0:
            break
        step = f(r) / d
        if abs(step) > 1e-8 * r:
            break
        r -= step
    return r


def _ray_crossings(g: GField, c: float, theta: float, r_max: float, n: int = 64) -> int:
    ct, st = math.cos(theta), math.sin(theta)
    rs = np.linspace(0.0, r_max, n + 1)[1:]
    vals = 0.5 * (rs * st) ** 2 + np.asarray([g.antideriv(r * ct) for r in rs]) - c
    # the sample at r_max / 2 sits on the root itself, so count sign flips of (vals > 0)
    return int(np.count_nonzero(np.diff(vals > 0)))


def is_star_shaped(g: GField, c: float, n_angles: int = 720) -> bool:
    try:
        for th in np.linspace(0.0, TWO_PI, n_angles, endpoint=False):
            r = radial_root(g, c, float(th))
            if _ray_crossings(g, c, float(th), 2.0 * r) != 1:
                return False
    except LevelError:
        return False
    return True


def min_level(g: GField, floor: float = DEFAULT_FLOOR, cap: float = 1e12, n_angles: int = 720) -> float:
    """Smallest level ``floor * 2**k`` whose curve passes the radial-uniqueness scan."""
    c = floor
    while c <= cap:
        if is_star_shaped(g, c, n_angles):
            return c
        c *= 2.0
    raise LevelError(f"no closed star-shaped level found below {cap}")


def sample_curve(g: GField, c: float, n: int) -> np.ndarray:
    """``n`` points of ``V = c`` at polar angles ``2*pi*j/n``, shape ``(n, 2)``."""
    if n < 4:
        raise ValueError("need at least 4 points")
    pts = np.empty((n, 2))
    tol = 1e-9 * max(1.0, c)
    for j in range(n):
        th = TWO_PI * j / n
        r = radial_root(g, c, th)
        x, y = r * math.cos(th), r * math.sin(th)
        if abs(g.energy(x, y) - c) > tol:
            raise LevelError(f"radial solve failed at angle {th}")
        pts[j] = x, y
    return pts


def tau_table(g: GField, levels) -> list[tuple[float, float, float, float]]:
    """Rows ``(c, h, h1, tau)`` for the tau-scan CSV."""
    rows = []
    for c in levels:
        h, h1 = intercepts(g, float(c))
        rows.append((float(c), h, h1, tau(g, float(c))))
    return rows
