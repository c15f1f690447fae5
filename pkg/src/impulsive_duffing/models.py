"""Restoring forces, periodic forcing and the impulse schedule.

Everything here is immutable once built.  The semilinear family is an odd
function whose derivative alternates between ``lambda_lo**2`` and
``lambda_hi**2`` on geometrically growing radial bands, with every corner
smoothed by a Gaussian-CDF ramp so that ``g`` is analytic and ``G`` stays in
closed form.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi


class HypothesisError(ValueError):
    """A restoring force failed a slope-bound or growth check on the grid."""


@dataclass(frozen=True)
class GField:
    """Restoring force ``g`` with derivative, antiderivative and bound constants.

    ``K`` bounds ``|g'|`` globally, and ``g(x)/x >= A0`` for ``|x| >= M0``.
    """

    eval: Callable[[float], float]
    deriv: Callable[[float], float]
    antideriv: Callable[[float], float]
    K: float
    A0: float
    M0: float
    kind: str = "user"
    params: dict = field(default_factory=dict, compare=False)
    knots: tuple[float, ...] = field(default=(), compare=False, repr=False)
    # local length over which g' changes appreciably; None means no limit
    feature_scale: Callable[[float], float] | None = field(default=None, compare=False, repr=False)

    def energy(self, x, y):
        """``V(x, y) = y**2 / 2 + G(x)``."""
        return 0.5 * y * y + self.antideriv(x)


def make_linear() -> GField:
    """The harmonic force ``g(x) = x``."""

    def g(x):
        return 1.0 * x

    def dg(x):
        return np.ones_like(x, dtype=float) if np.ndim(x) else 1.0

    def G(x):
        return 0.5 * x * x

    return GField(g, dg, G, K=1.0, A0=1.0, M0=1.0, kind="linear", params={"kind": "linear"})


_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
# beyond this many blend widths a corner counts as fully passed (or not reached)
_CUTOFF = 10.0


class _BlendedBands:
    """Odd force with ``g'(|x|) = lo + sum_k D_k * Phi((|x| - r_k) / w_k)``.

    ``Phi`` is the standard normal CDF, so each corner is an analytic ramp of
    width ``w_k`` and both integrals have closed forms::

        int Phi  = u Phi(u) + phi(u)
        int int  = ((u^2 + 1) Phi(u) + u phi(u)) / 2

    Corners more than ``_CUTOFF`` widths behind ``|x|`` are summed through
    prefix sums of their asymptotic (linear / quadratic) contributions.
    """

    def __init__(self, lo: float, corners: Sequence[float], jumps: Sequence[float], widths: Sequence[float]):
        self.lo = lo
        self.r = list(corners)
        self.d = list(jumps)
        self.w = list(widths)
        self.upper = [r + _CUTOFF * w for r, w in zip(self.r, self.w)]
        self.lower = [r - _CUTOFF * w for r, w in zip(self.r, self.w)]
        A, B, C = [0.0], [0.0], [0.0]
        for r, d, w in zip(self.r, self.d, self.w):
            A.append(A[-1] + d)
            B.append(B[-1] + d * r)
            C.append(C[-1] + d * (r * r + w * w))
        self.A, self.B, self.C = A, B, C

    def _span(self, X: float) -> tuple[int, int]:
        return bisect.bisect_left(self.upper, X), bisect.bisect_right(self.lower, X)

    def scale(self, x: float) -> float:
        """Half the distance to the nearest corner, but at least its width."""
        X = abs(x)
        k = bisect.bisect_left(self.r, X)
        best = math.inf
        for j in (k - 1, k):
            if 0 <= j < len(self.r):
                best = min(best, max(self.w[j], 0.5 * abs(X - self.r[j])))
        return best

    def dg(self, x):
        if np.ndim(x):
            return np.array([self.dg(float(v)) for v in np.ravel(x)]).reshape(np.shape(x))
        X = abs(x)
        jp, je = self._span(X)
        v = self.lo + self.A[jp]
        for k in range(jp, je):
            v += self.d[k] * 0.5 * math.erfc(-(X - self.r[k]) / (self.w[k] * _SQRT2))
        return v

    def g(self, x):
        if np.ndim(x):
            return np.array([self.g(float(v)) for v in np.ravel(x)]).reshape(np.shape(x))
        X = abs(x)
        jp, je = self._span(X)
        v = (self.lo + self.A[jp]) * X - self.B[jp]
        for k in range(jp, je):
            w = self.w[k]
            u = (X - self.r[k]) / w
            v += self.d[k] * w * (u * 0.5 * math.erfc(-u / _SQRT2) + _INV_SQRT_2PI * math.exp(-0.5 * u * u))
        return v if x >= 0 else -v

    def G(self, x):
        if np.ndim(x):
            return np.array([self.G(float(v)) for v in np.ravel(x)]).reshape(np.shape(x))
        X = abs(x)
        jp, je = self._span(X)
        v = 0.5 * ((self.lo + self.A[jp]) * X * X - 2.0 * self.B[jp] * X + self.C[jp])
        for k in range(jp, je):
            w = self.w[k]
            u = (X - self.r[k]) / w
            Phi = 0.5 * math.erfc(-u / _SQRT2)
            v += self.d[k] * w * w * 0.5 * ((u * u + 1.0) * Phi + u * _INV_SQRT_2PI * math.exp(-0.5 * u * u))
        return v


def make_semilinear(
    lambda_lo: float = 1.0,
    lambda_hi: float = 3.0,
    growth: float = 2.0,
    smoothing: float = 0.05,
    first_breakpoint: float = 1.0,
    duty: float = 0.6,
    x_max: float = 1e30,
) -> GField:
    """Alternating-slope semilinear force.

    The slope is ``lambda_lo**2`` on ``[0, r0)`` and then alternates between
    ``lambda_hi**2`` and ``lambda_lo**2`` on geometric bands.  A hi/lo band
    pair spans the ratio ``growth**2``; ``duty`` is the share of that pair (in
    log-radius) given to the ``lambda_lo`` band, so ``duty=0.5`` makes every
    band span the ratio ``growth``.  Corner ``r`` is blended over a width
    ``smoothing * r``.
    """
    if not (0 < lambda_lo < lambda_hi):
        raise ValueError("need 0 < lambda_lo < lambda_hi")
    if growth <= 1:
        raise ValueError("growth factor must exceed 1")
    if not (0 < duty < 1):
        raise ValueError("duty must lie in (0, 1)")
    if first_breakpoint <= 0:
        raise ValueError("first breakpoint must be positive")
    ratios = (growth ** (2 * (1 - duty)), growth ** (2 * duty))
    # the blend of the first corner must vanish well before the origin
    if not (0 < smoothing <= 0.08):
        raise ValueError("smoothing must lie in (0, 0.08]")
    if 1 + 3 * smoothing >= min(ratios) * (1 - 3 * smoothing):
        raise ValueError("smoothing half-width merges adjacent corners")

    lo, hi = lambda_lo**2, lambda_hi**2
    corners, jumps = [], []
    r = first_breakpoint
    k = 0
    while r < x_max:
        corners.append(r)
        jumps.append(hi - lo if k % 2 == 0 else lo - hi)
        r *= ratios[k % 2]
        k += 1
    bands = _BlendedBands(lo, corners, jumps, [smoothing * c for c in corners])
    params = {
        "kind": "semilinear",
        "lambda_lo": lambda_lo,
        "lambda_hi": lambda_hi,
        "growth": growth,
        "smoothing": smoothing,
        "first_breakpoint": first_breakpoint,
        "duty": duty,
    }
    # g' stays in [lo, hi] (alternating sum of decreasing CDF terms), so
    # g(x)/x >= lo on the whole line
    return GField(
        bands.g, bands.dg, bands.G, K=hi, A0=lo, M0=first_breakpoint,
        kind="semilinear", params=params, knots=tuple(corners),
        feature_scale=bands.scale,
    )


def _on_grid(f: Callable[[float], float], xs: np.ndarray) -> np.ndarray:
    return np.fromiter((f(float(x)) for x in xs), dtype=float, count=len(xs))


def check_hypotheses(g: GField, X: float | None = None, n: int = 20001, rel_fd: float = 1e-6) -> dict:
    """Grid check of the slope bound ``K``, linear growth ``g(x)/x >= A0`` and of ``G`` on ``[-X, X]``.

    Raises :class:`HypothesisError` on the first failing check; otherwise
    returns the measured extremes.
    """
    X = X if X is not None else max(10.0 * g.M0, 10.0)
    xs = np.linspace(-X, X, n)
    if g.antideriv(0.0) != 0.0:
        raise HypothesisError("G(0) != 0")
    max_dg = float(np.max(np.abs(_on_grid(g.deriv, xs))))
    if max_dg > g.K * (1 + 1e-12):
        raise HypothesisError(f"|g'| reaches {max_dg} > K={g.K}")
    far = xs[np.abs(xs) >= g.M0]
    min_ratio = float(np.min(_on_grid(g.eval, far) / far)) if far.size else math.inf
    if min_ratio < g.A0 * (1 - 1e-12):
        raise HypothesisError(f"g(x)/x drops to {min_ratio} < A0={g.A0}")
    # central difference of G against g; relative to max(|g|, 1) since g(0) = 0
    h = 1e-5 * np.maximum(1.0, np.abs(xs))
    G_plus = _on_grid(g.antideriv, xs + h)
    G_minus = _on_grid(g.antideriv, xs - h)
    gv = _on_grid(g.eval, xs)
    fd_err = float(np.max(np.abs((G_plus - G_minus) / (2 * h) - gv) / np.maximum(np.abs(gv), 1.0)))
    if fd_err > rel_fd:
        raise HypothesisError(f"finite difference of G disagrees with g (rel {fd_err})")
    return {"max_abs_deriv": max_dg, "min_ratio": min_ratio, "fd_rel_error": fd_err, "X": X}


@dataclass(frozen=True)
class Forcing:
    """Trigonometric polynomial ``p(t) = c0 + sum a_n cos(nt) + b_n sin(nt)``."""

    constant: float = 0.0
    cosine_coeffs: tuple[float, ...] = ()
    sine_coeffs: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "cosine_coeffs", tuple(float(a) for a in self.cosine_coeffs))
        object.__setattr__(self, "sine_coeffs", tuple(float(b) for b in self.sine_coeffs))

    @property
    def bound(self) -> float:
        return abs(self.constant) + sum(map(abs, self.cosine_coeffs)) + sum(map(abs, self.sine_coeffs))

    @property
    def is_zero(self) -> bool:
        return self.bound == 0.0

    def __call__(self, t: float) -> float:
        return eval_forcing(self, t)

    def to_dict(self) -> dict:
        return {"constant": self.constant, "cos": list(self.cosine_coeffs), "sin": list(self.sine_coeffs)}


def eval_forcing(f: Forcing, t: float) -> float:
    # reduce first so that t and t + 2*pi map to the same argument
    t = math.fmod(t, TWO_PI)
    if t < 0:
        t += TWO_PI
    v = f.constant
    for n, a in enumerate(f.cosine_coeffs, start=1):
        v += a * math.cos(n * t)
    for n, b in enumerate(f.sine_coeffs, start=1):
        v += b * math.sin(n * t)
    return v


@dataclass(frozen=True)
class ImpulseSchedule:
    """One velocity-reversal impulse per period, at ``t1 + 2*pi*j``."""

    t1: float
    period: float = TWO_PI

    def __post_init__(self):
        if not (0.0 <= self.t1 < TWO_PI):
            raise ValueError("t1 must lie in [0, 2*pi)")
        if self.period != TWO_PI:
            raise ValueError("the impulse period is fixed at 2*pi")

    def time(self, j: int) -> float:
        return self.t1 + self.period * j

    def times_in(self, t_start: float, t_end: float) -> list[float]:
        """Impulse times in the half-open interval ``(t_start, t_end]``."""
        j = math.floor((t_start - self.t1) / self.period)
        out = []
        while True:
            tj = self.time(j)
            if tj > t_end:
                break
            if tj > t_start:
                out.append(tj)
            j += 1
        return out


@dataclass(frozen=True)
class ImpulsiveSystem:
    """``x'' + g(x) = p(t)`` with ``x' -> -x'`` at the scheduled times.

    ``forcing`` may be a :class:`Forcing`, ``None`` (autonomous) or any
    2*pi-periodic callable.  ``impulse=None`` disables the impulses.
    """

    g: GField
    forcing: Forcing | Callable[[float], float] | None = None
    impulse: ImpulseSchedule | None = None

    @property
    def autonomous(self) -> bool:
        f = self.forcing
        return f is None or (isinstance(f, Forcing) and f.is_zero)

    def p(self, t: float) -> float:
        return 0.0 if self.forcing is None else self.forcing(t)

    def with_forcing(self, forcing) -> "ImpulsiveSystem":
        return ImpulsiveSystem(self.g, forcing, self.impulse)

    def with_impulse(self, impulse: ImpulseSchedule | None) -> "ImpulsiveSystem":
        return ImpulsiveSystem(self.g, self.forcing, impulse)


def gfield_from_config(cfg: dict) -> GField:
    kind = cfg.get("kind", "linear")
    if kind == "linear":
        return make_linear()
    if kind == "semilinear":
        keys = ("lambda_lo", "lambda_hi", "growth", "smoothing", "first_breakpoint", "duty")
        return make_semilinear(**{k: float(cfg[k]) for k in keys if k in cfg})
    raise ValueError(f"unknown g kind {kind!r}")


def system_from_config(cfg: dict) -> ImpulsiveSystem:
    """Build a system from the JSON model-config layout."""
    g = gfield_from_config(cfg.get("g", {"kind": "linear"}))
    fc = cfg.get("forcing") or {}
    forcing = Forcing(float(fc.get("constant", 0.0)), tuple(fc.get("cos", ())), tuple(fc.get("sin", ())))
    imp = cfg.get("impulse", {"t1": math.pi / 2})
    impulse = None if imp is None or imp.get("t1") is None else ImpulseSchedule(float(imp["t1"]))
    return ImpulsiveSystem(g, forcing, impulse)
