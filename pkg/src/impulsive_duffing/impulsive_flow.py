"""Time stepping between impulses, the impulse jump, and the lifted polar angle.

Integration is split exactly at the scheduled impulse times, which are known
in advance, so no event location is involved.  States are right-continuous:
an impulse at ``t_j`` belongs to every interval ``(t_start, t_end]`` that
contains it, and a state stamped ``t_j`` is the post-impulse state.

The lifted angle is obtained by unwrapping ``atan2(y, x)`` along the dense
output of each accepted step.  At an impulse the angle jumps by
``delta = phi+ - phi-`` with ``delta = -2 phi- (mod 2 pi)`` taken in
``(-2 pi, 0]`` and ``delta = 0`` when ``y = 0``: the reflection is counted as
a forward (clockwise) skip along the orbit.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import DOP853

from .models import TWO_PI, ImpulsiveSystem

# DOP853 spends 12 evaluations per attempted step, 3 per dense-output build
# and 2 during start-up.
_EVALS_PER_ATTEMPT = 12
_EVALS_PER_DENSE = 3
_EVALS_STARTUP = 2

_QUARTER = 0.5 * math.pi

# Steps may cover at most this fraction of the local feature scale of g, and
# features shorter than _SCALE_FLOOR * rho are not resolved.  Without the cap
# the embedded error estimate can step straight over a narrow corner.
_TRAVEL_FRACTION = 0.5
_SCALE_FLOOR = 1e-3


class FlowError(ArithmeticError):
    """The integrator failed (step-size underflow or non-finite state)."""


def wrap_angle(a: float) -> float:
    """Representative of ``a`` in ``[-pi, pi)``."""
    return (a + math.pi) % TWO_PI - math.pi


def snap_angle(phi_guess: float, x: float, y: float) -> float:
    """Lift of ``atan2(y, x)`` nearest to ``phi_guess``."""
    th = math.atan2(y, x)
    return th + TWO_PI * round((phi_guess - th) / TWO_PI)


@dataclass(frozen=True)
class LiftedState:
    t: float
    x: float
    y: float
    phi: float
    rho: float = field(default=float("nan"))

    def __post_init__(self):
        object.__setattr__(self, "rho", math.hypot(self.x, self.y))

    @classmethod
    def at(cls, t: float, x: float, y: float, phi: float | None = None) -> "LiftedState":
        """State with angle ``atan2(y, x)``, or the lift of it nearest ``phi``."""
        x, y = float(x), float(y)
        return cls(float(t), x, y, math.atan2(y, x) if phi is None else snap_angle(phi, x, y))

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class FlowSettings:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_step: float = math.inf
    dense_output: bool = False

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol <= 0 or self.max_step <= 0:
            raise ValueError("tolerances and max_step must be positive")

    def tightened(self, factor: float = 10.0) -> "FlowSettings":
        return replace(self, rel_tol=self.rel_tol / factor, abs_tol=self.abs_tol / factor)


DEFAULT_SETTINGS = FlowSettings()


@dataclass
class _Piece:
    """One accepted step: interpolant plus the angle knots used to unwrap it."""

    t_old: float
    t: float
    interp: object
    knot_t: list
    knot_phi: list


@dataclass
class Trajectory:
    """Dense record of an evolution; rows at impulses are kept separately."""

    pieces: list = field(default_factory=list)
    impulses: list = field(default_factory=list)  # (t, pre LiftedState, post LiftedState)

    def _find(self, t: float) -> _Piece:
        starts = [p.t_old for p in self.pieces]
        i = bisect.bisect_right(starts, t) - 1
        i = min(max(i, 0), len(self.pieces) - 1)
        return self.pieces[i]

    def sample(self, ts) -> np.ndarray:
        """Rows ``(t, x, y, phi)``; a time equal to an impulse gets the post-impulse state."""
        out = np.empty((len(ts), 4))
        for k, t in enumerate(ts):
            p = self._find(float(t))
            x, y = p.interp(float(t))[:2]
            j = max(bisect.bisect_right(p.knot_t, t) - 1, 0)
            phi0 = p.knot_phi[j]
            th = math.atan2(y, x)
            out[k] = t, x, y, phi0 + wrap_angle(th - phi0)
        return out


@dataclass
class Diagnostics:
    winding: float = 0.0
    energy_drift: float | None = None
    accepted_steps: int = 0
    rejected_steps: int = 0
    nfev: int = 0
    impulse_times: list = field(default_factory=list)
    jacobian: np.ndarray | None = None
    trajectory: Trajectory | None = None


def _rhs(sys: ImpulsiveSystem, tangent: bool):
    g = sys.g.eval
    dg = sys.g.deriv
    if sys.autonomous:
        if not tangent:
            return lambda t, z: np.array([z[1], -g(z[0])])

        def f(t, z):
            k = -dg(z[0])
            return np.array([z[1], -g(z[0]), z[4], z[5], k * z[2], k * z[3]])

        return f
    p = sys.p
    if not tangent:
        return lambda t, z: np.array([z[1], p(t) - g(z[0])])

    def fp(t, z):
        k = -dg(z[0])
        return np.array([z[1], p(t) - g(z[0]), z[4], z[5], k * z[2], k * z[3]])

    return fp


def _angular_speed(sys: ImpulsiveSystem, t: float, x: float, y: float) -> float:
    r2 = x * x + y * y
    if r2 == 0:
        return math.inf
    return abs(x * (sys.p(t) - sys.g.eval(x)) - y * y) / r2


def _travel_cap(sys: ImpulsiveSystem, t: float, x: float, y: float) -> float:
    """Largest ``h`` with ``|y| h + |x''| h**2 / 2`` below the allowed travel."""
    scale = sys.g.feature_scale
    if scale is None:
        return math.inf
    L = _TRAVEL_FRACTION * max(scale(x), _SCALE_FLOOR * math.hypot(x, y))
    v = abs(y)
    a = abs(sys.p(t) - sys.g.eval(x))
    if v == 0 and a == 0:
        return math.inf
    return 2.0 * L / (v + math.sqrt(v * v + 2.0 * a * L))


def _integrate(sys, t0, z0, t_end, settings, phi0, tangent=False, record=None, energy_ref=None):
    """Advance ``z0`` from ``t0`` to ``t_end`` with no impulse in between.

    Returns ``(z_end, phi_end, stats)`` where ``stats`` holds step counts and
    the maximal energy deviation from ``energy_ref`` seen at step points.
    """
    stats = {"accepted": 0, "rejected": 0, "nfev": 0, "drift": 0.0}
    if t_end == t0:
        return np.asarray(z0, dtype=float), phi0, stats
    fun = _rhs(sys, tangent)
    solver = DOP853(
        fun, t0, np.asarray(z0, dtype=float), t_end,
        rtol=settings.rel_tol, atol=settings.abs_tol, max_step=settings.max_step,
    )
    V = sys.g.energy
    phi = phi0
    x_old, y_old = float(z0[0]), float(z0[1])
    n_dense = 0
    capped = sys.g.feature_scale is not None
    while solver.status == "running":
        if capped:
            solver.max_step = min(settings.max_step, _travel_cap(sys, solver.t, float(solver.y[0]), float(solver.y[1])))
        msg = solver.step()
        if solver.status == "failed":
            raise FlowError(f"integration failed at t={solver.t}: {msg}")
        stats["accepted"] += 1
        x, y = float(solver.y[0]), float(solver.y[1])
        if not (math.isfinite(x) and math.isfinite(y)):
            raise FlowError(f"non-finite state at t={solver.t}")
        h = solver.t - solver.t_old
        d = wrap_angle(math.atan2(y, x) - math.atan2(y_old, x_old))
        omega = max(_angular_speed(sys, solver.t_old, x_old, y_old), _angular_speed(sys, solver.t, x, y))
        need_dense = record is not None
        if abs(d) > 0.25 * math.pi or omega * h > 0.25 * math.pi:
            need_dense = True
        if need_dense:
            interp = solver.dense_output()
            n_dense += 1
            knot_t, knot_phi = _unwrap_step(interp, solver.t_old, solver.t, x_old, y_old, phi, omega * h)
            phi = knot_phi[-1]
            if record is not None:
                record.pieces.append(_Piece(solver.t_old, solver.t, interp, knot_t, knot_phi))
        else:
            phi = phi + d
        if energy_ref is not None:
            stats["drift"] = max(stats["drift"], abs(V(x, y) - energy_ref))
        x_old, y_old = x, y
    stats["nfev"] = solver.nfev
    attempts = (solver.nfev - _EVALS_STARTUP - _EVALS_PER_DENSE * n_dense) // _EVALS_PER_ATTEMPT
    stats["rejected"] = max(attempts - stats["accepted"], 0)
    z = solver.y.copy()
    phi = snap_angle(phi, float(z[0]), float(z[1]))
    return z, phi, stats


def _unwrap_step(interp, t_old, t_new, x_old, y_old, phi_old, sweep_est):
    """Angle knots across one step, refined until neighbours differ by < pi/2."""
    n = max(2, int(math.ceil(sweep_est / (0.125 * math.pi))) + 1)
    for _ in range(12):
        ts = np.linspace(t_old, t_new, n + 1)
        zz = interp(ts)
        th = np.arctan2(zz[1], zz[0])
        th[0] = math.atan2(y_old, x_old)
        dth = (np.diff(th) + math.pi) % TWO_PI - math.pi
        if np.all(np.abs(dth) < _QUARTER):
            phis = phi_old + np.concatenate(([0.0], np.cumsum(dth)))
            return list(ts), list(phis)
        n *= 4
    raise FlowError("angle unwrapping did not resolve within one step")


def _check_no_interior_impulse(sys: ImpulsiveSystem, t0: float, t_end: float):
    if sys.impulse is None:
        return
    for tj in sys.impulse.times_in(t0, t_end):
        if tj < t_end:
            raise ValueError(f"impulse time {tj} lies strictly inside ({t0}, {t_end})")


def flow_segment(sys: ImpulsiveSystem, s: LiftedState, t_end: float, settings: FlowSettings = DEFAULT_SETTINGS) -> LiftedState:
    """Advance ``s`` to ``t_end`` without applying any impulse."""
    if t_end < s.t:
        raise ValueError("only forward integration is supported")
    _check_no_interior_impulse(sys, s.t, t_end)
    z, phi, _ = _integrate(sys, s.t, (s.x, s.y), t_end, settings, s.phi)
    return LiftedState(t_end, float(z[0]), float(z[1]), phi)


def impulse_jump(x: float, y: float) -> float:
    """Angle increment of the reflection ``(x, y) -> (x, -y)``, in ``(-2 pi, 0]``."""
    if y == 0:
        return 0.0
    delta = -((2.0 * math.atan2(y, x)) % TWO_PI)
    if delta <= -TWO_PI:
        delta = -np.nextafter(TWO_PI, 0.0)
    return delta


def apply_impulse(s: LiftedState, sys: ImpulsiveSystem | None = None, tol: float = 1e-12) -> LiftedState:
    """Velocity reversal at an impulse time; ``x`` and ``rho`` are untouched."""
    if sys is not None and sys.impulse is not None:
        j = round((s.t - sys.impulse.t1) / TWO_PI)
        if abs(sys.impulse.time(j) - s.t) > tol * max(1.0, abs(s.t)):
            raise ValueError(f"t={s.t} is not a scheduled impulse time")
    phi = s.phi + impulse_jump(s.x, s.y)
    return LiftedState(s.t, s.x, -s.y, phi)


def evolve(
    sys: ImpulsiveSystem,
    s0: LiftedState,
    t_span: tuple[float, float],
    settings: FlowSettings = DEFAULT_SETTINGS,
    tangent: bool = False,
) -> tuple[LiftedState, Diagnostics]:
    """Evolve through all impulses in ``(t_span[0], t_span[1]]``.

    Integration restarts at every impulse and at every multiple of 2*pi.

    With ``tangent=True`` the variational system is carried along and the
    diagnostics hold the 2x2 derivative of the end state with respect to
    ``(x0, y0)``; each impulse acts on it as ``diag(1, -1)``.
    """
    t0, tf = map(float, t_span)
    if t0 != s0.t:
        raise ValueError("t_span must start at the state's time")
    if tf < t0:
        raise ValueError("only forward evolution is supported")
    times = sys.impulse.times_in(t0, tf) if sys.impulse is not None else []
    diag = Diagnostics(impulse_times=list(times))
    record = Trajectory() if settings.dense_output else None
    e_ref = sys.g.energy(s0.x, s0.y) if sys.autonomous else None
    drift = 0.0

    z = np.array([s0.x, s0.y, 1.0, 0.0, 0.0, 1.0]) if tangent else np.array([s0.x, s0.y])
    phi = s0.phi
    t = t0
    # also stop at whole periods so that a long run repeats the step sequence
    # of consecutive one-period runs
    k0, k1 = math.floor(t0 / TWO_PI) + 1, math.ceil(tf / TWO_PI) - 1
    periods = [TWO_PI * k for k in range(k0, k1 + 1) if t0 < TWO_PI * k < tf]
    stops = sorted(set(times) | set(periods) | {tf})
    impulse_set = set(times)
    for t_stop in stops:
        z, phi, st = _integrate(sys, t, z, t_stop, settings, phi, tangent, record, e_ref)
        diag.accepted_steps += st["accepted"]
        diag.rejected_steps += st["rejected"]
        diag.nfev += st["nfev"]
        drift = max(drift, st["drift"])
        t = t_stop
        if t_stop in impulse_set:
            pre = LiftedState(t, float(z[0]), float(z[1]), phi)
            post = apply_impulse(pre)
            z = z.copy()
            z[1] = -z[1]
            if tangent:
                z[4], z[5] = -z[4], -z[5]
            phi = post.phi
            if record is not None:
                record.impulses.append((t, pre, post))
    end = LiftedState(tf, float(z[0]), float(z[1]), phi)
    diag.winding = end.phi - s0.phi
    if e_ref is not None:
        diag.energy_drift = max(drift, abs(sys.g.energy(end.x, end.y) - e_ref))
    if tangent:
        diag.jacobian = np.array([[z[2], z[3]], [z[4], z[5]]])
    diag.trajectory = record
    return end, diag
