"""Windings on energy curves, annulus selection from the period function, and
the boundary sign test used to certify twist.

For a target ``m`` the reference period is ``T = 2*pi/m``.  An ``A`` annulus
runs from a fast level (``tau < T``) out to the next slow level
(``tau > T``); a ``B`` annulus runs from that slow level out to the next fast
one.  On the fast boundary ``winding + 2*m*pi`` should be negative, on the
slow boundary positive.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import optimize

from .energy_geometry import LevelError, min_level, sample_curve, tau
from .impulsive_flow import DEFAULT_SETTINGS, FlowSettings, LiftedState, evolve
from .models import TWO_PI, GField, ImpulsiveSystem

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AnnulusSpec:
    """Region between the energy curves ``V = a`` (inner) and ``V = b`` (outer)."""

    a: float
    b: float
    m: int
    alpha: float
    beta1: float = math.nan
    beta2: float = math.nan
    boundary_samples: int = 0
    kind: str = "A"
    tau_a: float = math.nan
    tau_b: float = math.nan

    def __post_init__(self):
        if not (0 < self.a < self.b):
            raise ValueError("need 0 < a < b")
        if self.m < 1:
            raise ValueError("m must be a positive integer")
        if self.kind not in ("A", "B"):
            raise ValueError("kind must be 'A' or 'B'")

    @property
    def fast_level(self) -> float:
        """The boundary level whose period is below ``2*pi/m``."""
        return self.a if self.kind == "A" else self.b

    @property
    def slow_level(self) -> float:
        return self.b if self.kind == "A" else self.a

    @property
    def target_period(self) -> float:
        return TWO_PI / self.m

    def to_dict(self) -> dict:
        # JSON has no NaN; unmeasured margins become null
        return {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in asdict(self).items()}


def winding_on_curve(
    sys: ImpulsiveSystem, c: float, n: int, settings: FlowSettings = DEFAULT_SETTINGS
) -> list[tuple[float, float]]:
    """``(start angle, winding over [0, 2*pi])`` for ``n`` points of ``V = c``."""
    if n < 8:
        raise ValueError("need at least 8 sample points")
    out = []
    for x, y in sample_curve(sys.g, c, n):
        s0 = LiftedState.at(0.0, x, y)
        _, diag = evolve(sys, s0, (0.0, TWO_PI), settings)
        out.append((s0.phi, diag.winding))
    return out


def log_levels(c_lo: float, c_hi: float, points: int) -> np.ndarray:
    if not (0 < c_lo < c_hi):
        raise ValueError("need 0 < c_lo < c_hi")
    if points < 3:
        raise ValueError("need at least 3 levels")
    return np.logspace(math.log10(c_lo), math.log10(c_hi), points)


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Maximal index ranges ``[i, j)`` where ``mask`` is true."""
    runs, start = [], None
    for i, v in enumerate(mask):
        if v and start is None:
            start = i
        elif not v and start is not None:
            runs.append((start, i))
            start = None
    if start is not None:
        runs.append((start, len(mask)))
    return runs


def _refine_extremum(g: GField, cs: np.ndarray, taus: np.ndarray, i: int, sign: float) -> tuple[float, float]:
    """Local min (``sign=1``) or max (``sign=-1``) of tau near grid index ``i``."""
    lo = math.log(cs[max(i - 1, 0)])
    hi = math.log(cs[min(i + 1, len(cs) - 1)])
    best_c, best_t = float(cs[i]), float(taus[i])
    if hi > lo:
        res = optimize.minimize_scalar(
            lambda u: sign * tau(g, math.exp(u)), bounds=(lo, hi), method="bounded", options={"xatol": 1e-6}
        )
        c = math.exp(res.x)
        t = sign * res.fun
        if sign * t < sign * best_t:
            best_c, best_t = float(c), float(t)
    return best_c, best_t


def tau_scan(
    g: GField,
    c_lo: float,
    c_hi: float,
    points: int = 200,
    m_candidates=(1, 2, 3, 4, 5, 6, 7),
    check_floor: bool = True,
    min_alpha: float = 1e-6,
) -> list[AnnulusSpec]:
    """Annuli realising period oscillation across ``2*pi/m`` for each candidate ``m``."""
    cs = log_levels(c_lo, c_hi, points)
    if check_floor and c_lo < min_level(g):
        raise LevelError(f"c_lo={c_lo} lies below the first star-shaped level")
    taus = np.array([tau(g, float(c)) for c in cs])
    return annuli_from_table(g, cs, taus, m_candidates, min_alpha)


def annuli_from_table(g: GField, cs, taus, m_candidates, min_alpha: float = 1e-6) -> list[AnnulusSpec]:
    """Annuli from an already computed ``(c, tau)`` grid.

    Levels count as fast or slow only when ``tau`` clears ``2*pi/m`` by more
    than ``min_alpha``, which keeps quadrature noise on a flat period
    function from producing annuli.
    """
    cs, taus = np.asarray(cs, dtype=float), np.asarray(taus, dtype=float)
    found = []
    for m in m_candidates:
        found.extend(_annuli_for(g, cs, taus, int(m), min_alpha))
    if not found:
        log.info("no oscillation of tau across 2*pi/m for m in %s", list(m_candidates))
    return found


def _annuli_for(g: GField, cs: np.ndarray, taus: np.ndarray, m: int, min_alpha: float) -> list[AnnulusSpec]:
    T = TWO_PI / m
    runs = sorted(
        [(i, j, "fast") for i, j in _runs(taus < T - min_alpha)]
        + [(i, j, "slow") for i, j in _runs(taus > T + min_alpha)]
    )
    # extremal level of each run, in increasing c
    levels = []
    for i, j, which in runs:
        seg = taus[i:j]
        if which == "fast":
            k = i + int(np.argmin(seg))
            levels.append(("fast",) + _refine_extremum(g, cs, taus, k, 1.0))
        else:
            k = i + int(np.argmax(seg))
            levels.append(("slow",) + _refine_extremum(g, cs, taus, k, -1.0))
    while levels and levels[0][0] != "fast":
        levels.pop(0)
    out = []
    for (w1, c1, t1), (w2, c2, t2) in zip(levels, levels[1:]):
        margin = min(abs(T - t1), abs(T - t2))
        # strictly inside both margins
        alpha = float(margin * (1.0 - 1e-6))
        out.append(AnnulusSpec(a=c1, b=c2, m=m, alpha=alpha, kind="A" if w1 == "fast" else "B", tau_a=t1, tau_b=t2))
    return out


def pick_m(annuli: list[AnnulusSpec]) -> int | None:
    """Candidate ``m`` with the most annuli (ties go to the smaller ``m``)."""
    counts: dict[int, int] = {}
    for an in annuli:
        counts[an.m] = counts.get(an.m, 0) + 1
    if not counts:
        return None
    return min(counts, key=lambda m: (-counts[m], m))


@dataclass
class TwistReport:
    annulus: AnnulusSpec
    verdict: str
    beta1: float
    beta2: float
    fast_values: list = field(default_factory=list)  # (phi0, winding + 2 m pi) on the fast curve
    slow_values: list = field(default_factory=list)
    offending: list = field(default_factory=list)  # (curve, phi0, value)

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_dict(self) -> dict:
        d = self.annulus.to_dict()
        d.update(samples=self.annulus.boundary_samples, verdict=self.verdict, beta1=self.beta1, beta2=self.beta2)
        d["offending"] = [list(o) for o in self.offending]
        return d


def twist_check(
    sys: ImpulsiveSystem,
    annulus: AnnulusSpec,
    samples: int = 64,
    settings: FlowSettings = DEFAULT_SETTINGS,
) -> TwistReport:
    """Sign test of ``winding + 2*m*pi`` on both boundary curves."""
    shift = TWO_PI * annulus.m
    fast = [(p, w + shift) for p, w in winding_on_curve(sys, annulus.fast_level, samples, settings)]
    slow = [(p, w + shift) for p, w in winding_on_curve(sys, annulus.slow_level, samples, settings)]
    beta1 = -max(v for _, v in fast)
    beta2 = min(v for _, v in slow)
    offending = [("fast", p, v) for p, v in fast if not v < 0] + [("slow", p, v) for p, v in slow if not v > 0]
    verdict = "pass" if not offending else "fail"
    an = replace(annulus, beta1=beta1, beta2=beta2, boundary_samples=samples)
    return TwistReport(an, verdict, beta1, beta2, fast, slow, offending)


def twist_stable(sys: ImpulsiveSystem, annulus: AnnulusSpec, samples: int = 64, settings: FlowSettings = DEFAULT_SETTINGS) -> bool:
    """Same verdict with doubled samples and with 10x tighter tolerances."""
    base = twist_check(sys, annulus, samples, settings).verdict
    doubled = twist_check(sys, annulus, 2 * samples, settings).verdict
    tight = twist_check(sys, annulus, samples, settings.tightened(10.0)).verdict
    return base == doubled == tight


def _same_structure(a: ImpulsiveSystem, b: ImpulsiveSystem) -> bool:
    return a.g is b.g or a.g == b.g


def gap_profile(
    sys_forced: ImpulsiveSystem,
    sys_autonomous: ImpulsiveSystem,
    gammas,
    n_angles: int = 64,
    settings: FlowSettings = DEFAULT_SETTINGS,
) -> list[tuple[float, float]]:
    """``(gamma, max |Theta - Phi|)`` over start points on the circle of radius gamma."""
    if not _same_structure(sys_forced, sys_autonomous) or sys_forced.impulse != sys_autonomous.impulse:
        raise ValueError("both systems must share the restoring force and the impulse schedule")
    rows = []
    for gamma in gammas:
        gamma = float(gamma)
        worst = 0.0
        for j in range(n_angles):
            # half-step offset keeps axis-aligned starts (where the impulse
            # can meet y = 0 exactly and the jump rule is discontinuous) off the grid
            th = TWO_PI * (j + 0.5) / n_angles
            s0 = LiftedState.at(0.0, gamma * math.cos(th), gamma * math.sin(th))
            _, df = evolve(sys_forced, s0, (0.0, TWO_PI), settings)
            _, da = evolve(sys_autonomous, s0, (0.0, TWO_PI), settings)
            worst = max(worst, abs(df.winding - da.winding))
        rows.append((gamma, worst))
    return rows


def gamma_star(profile: list[tuple[float, float]], eps: float) -> float | None:
    """Least tested gamma from which every larger tested gamma has gap below ``eps``."""
    star = None
    for gamma, gap in sorted(profile, reverse=True):
        if gap < eps:
            star = gamma
        else:
            break
    return star


def write_annuli_json(path, annuli, header: dict | None = None, note: str | None = None) -> None:
    doc = dict(header or {})
    doc["annuli"] = [a.to_dict() if isinstance(a, AnnulusSpec) else a for a in annuli]
    if note:
        doc["note"] = note
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_annuli_json(path) -> list[AnnulusSpec]:
    with open(path) as fh:
        doc = json.load(fh)
    items = doc["annuli"] if isinstance(doc, dict) else doc
    keys = {f for f in AnnulusSpec.__dataclass_fields__}
    return [
        AnnulusSpec(**{k: (math.nan if v is None else v) for k, v in it.items() if k in keys}) for it in items
    ]
