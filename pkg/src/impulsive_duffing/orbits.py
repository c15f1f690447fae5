"""Fixed points of the 2*pi map inside an annulus, and their verification.

Roots of ``F(z) = P(z) - z`` are found by Newton iteration from a polar seed
grid.  Fixed points of the autonomous map come in curves, so ``F'`` is
singular on them; the Newton step is a truncated least-squares solve, which
lands on the nearest point of such a curve instead of blowing up.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .energy_geometry import LevelError, radial_root, sample_curve
from .impulsive_flow import DEFAULT_SETTINGS, FlowSettings, LiftedState, evolve
from .models import TWO_PI, GField, ImpulsiveSystem
from .poincare import iterate, map_point
from .twist import AnnulusSpec

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-9
PERIOD_TOL = 1e-8
_RCOND = 1e-7


class BoundaryFixedPointError(ArithmeticError):
    """The displacement field vanishes on a boundary curve."""


@dataclass
class OrbitRecord:
    point: tuple[float, float]
    residual: float
    annulus_id: int | str | None = None
    multiplier_pair: tuple[complex, complex] | None = None
    min_period_factor: int | None = None
    degenerate: bool = False
    verified_residual: float = math.nan
    level: float = math.nan
    periodic: bool = True

    @property
    def scale(self) -> float:
        return max(1.0, math.hypot(*self.point))

    def to_dict(self) -> dict:
        mp = self.multiplier_pair
        return {
            "point": list(self.point),
            "residual": self.residual,
            "verified_residual": None if math.isnan(self.verified_residual) else self.verified_residual,
            "annulus_id": self.annulus_id,
            "multiplier_pair": None if mp is None else [[m.real, m.imag] for m in mp],
            "min_period_factor": self.min_period_factor,
            "degenerate": self.degenerate,
            "level": None if math.isnan(self.level) else self.level,
            "periodic": self.periodic,
        }


def _map_and_jacobian(sys: ImpulsiveSystem, z: np.ndarray, settings: FlowSettings):
    end, diag = evolve(sys, LiftedState.at(0.0, z[0], z[1]), (0.0, TWO_PI), settings, tangent=True)
    return np.array([end.x, end.y]), diag.jacobian


def in_annulus(g: GField, annulus: AnnulusSpec, z) -> bool:
    """Radial test: ``z`` lies strictly between the two boundary curves on its ray."""
    x, y = float(z[0]), float(z[1])
    rho = math.hypot(x, y)
    if rho == 0:
        return False
    th = math.atan2(y, x)
    return radial_root(g, annulus.a, th) < rho < radial_root(g, annulus.b, th)


def seed_grid(g: GField, annulus: AnnulusSpec, grid: tuple[int, int], rng: np.random.Generator | None = None) -> np.ndarray:
    """Seeds on interior levels (geometric in energy) at evenly spaced angles."""
    nr, na = grid
    la, lb = math.log(annulus.a), math.log(annulus.b)
    seeds = []
    for i in range(nr):
        c = math.exp(la + (lb - la) * (i + 0.5) / nr)
        for j in range(na):
            th = TWO_PI * (j + 0.5) / na
            if rng is not None:
                th += rng.uniform(-0.25, 0.25) * TWO_PI / na
            r = radial_root(g, c, th)
            seeds.append((r * math.cos(th), r * math.sin(th)))
    return np.array(seeds)


def newton_fixed_point(
    sys: ImpulsiveSystem,
    z0,
    settings: FlowSettings = DEFAULT_SETTINGS,
    max_iter: int = 25,
    inside: Callable[[np.ndarray], bool] | None = None,
):
    """Newton on ``P(z) - z``.  Returns ``(z, residual, jacobian)`` or ``None``."""
    z = np.asarray(z0, dtype=float).copy()
    tol = RESIDUAL_TOL * max(1.0, float(np.linalg.norm(z)))
    prev = math.inf
    for _ in range(max_iter):
        Pz, J = _map_and_jacobian(sys, z, settings)
        F = Pz - z
        res = float(np.linalg.norm(F))
        if res < 0.1 * tol:
            return z, res, J
        if res > 10 * prev and prev < math.inf:
            return None
        prev = res
        step, *_ = np.linalg.lstsq(J - np.eye(2), -F, rcond=_RCOND)
        # damp steps that would jump across most of the orbit
        n = float(np.linalg.norm(step))
        cap = 0.25 * max(1.0, float(np.linalg.norm(z)))
        if n > cap:
            step *= cap / n
        z = z + step
        if not np.all(np.isfinite(z)) or (inside is not None and not inside(z)):
            return None
        tol = RESIDUAL_TOL * max(1.0, float(np.linalg.norm(z)))
        if n < 1e-3 * tol:
            break
    Pz, J = _map_and_jacobian(sys, z, settings)
    res = float(np.linalg.norm(Pz - z))
    return (z, res, J) if res < tol else None


def _is_degenerate(J: np.ndarray) -> bool:
    s = np.linalg.svd(J - np.eye(2), compute_uv=False)
    return bool(s[-1] < 1e-6 * max(s[0], 1.0))


def find_fixed_points(
    sys: ImpulsiveSystem,
    annulus: AnnulusSpec,
    grid: tuple[int, int] = (3, 8),
    settings: FlowSettings = DEFAULT_SETTINGS,
    seed: int | None = 0,
    annulus_id=None,
    max_roots: int | None = None,
) -> list[OrbitRecord]:
    """Verified fixed points of the 2*pi map strictly inside ``annulus``."""
    g = sys.g
    rng = np.random.default_rng(seed) if seed is not None else None
    seeds = seed_grid(g, annulus, grid, rng)
    inside = lambda z: in_annulus(g, annulus, z)
    dedup = 1e-6 * math.sqrt(annulus.a)
    tight = settings.tightened(10.0)
    found: list[OrbitRecord] = []
    for z0 in seeds:
        try:
            out = newton_fixed_point(sys, z0, settings, inside=inside)
        except (ArithmeticError, LevelError) as exc:
            log.debug("seed %s skipped: %s", z0, exc)
            continue
        if out is None:
            continue
        z, res, J = out
        if not inside(z):
            continue
        if any(math.dist(z, r.point) < dedup for r in found):
            continue
        scale = max(1.0, float(np.linalg.norm(z)))
        check = float(np.linalg.norm(map_point(sys, z, tight) - z))
        if check >= RESIDUAL_TOL * scale:
            log.debug("root %s rejected at tighter tolerance (%g)", z, check)
            continue
        ev = np.linalg.eigvals(J)
        found.append(
            OrbitRecord(
                point=(float(z[0]), float(z[1])),
                residual=res,
                annulus_id=annulus_id,
                multiplier_pair=(complex(ev[0]), complex(ev[1])),
                degenerate=_is_degenerate(J),
                verified_residual=check,
                level=float(g.energy(z[0], z[1])),
            )
        )
        if max_roots is not None and len(found) >= max_roots:
            break
    found.sort(key=lambda r: r.residual)
    return found


def verify_orbit(sys: ImpulsiveSystem, rec: OrbitRecord, n_max: int = 4, settings: FlowSettings = DEFAULT_SETTINGS) -> OrbitRecord:
    """Least ``n <= n_max`` with ``|P^n(z) - z| < 1e-8 * max(1, |z|)`` at 10x tighter tolerance."""
    tight = settings.tightened(10.0)
    z = np.asarray(rec.point, dtype=float)
    tol = PERIOD_TOL * rec.scale
    w = z.copy()
    n_found = None
    for n in range(1, n_max + 1):
        w = map_point(sys, w, tight)
        if float(np.linalg.norm(w - z)) < tol:
            n_found = n
            break
    _, J = _map_and_jacobian(sys, z, tight)
    ev = np.linalg.eigvals(J)
    res = float(np.linalg.norm(map_point(sys, z, tight) - z))
    return replace(
        rec,
        min_period_factor=n_found,
        periodic=n_found is not None,
        multiplier_pair=(complex(ev[0]), complex(ev[1])),
        verified_residual=res,
    )


def _as_map(sys_or_map, settings: FlowSettings):
    if isinstance(sys_or_map, ImpulsiveSystem):
        return lambda z: map_point(sys_or_map, z, settings)
    return lambda z: np.asarray(sys_or_map(np.asarray(z, dtype=float)), dtype=float)


def _curve_point(g: GField, c: float, th: float) -> np.ndarray:
    r = radial_root(g, c, th)
    return np.array([r * math.cos(th), r * math.sin(th)])


def _boundary_degree(P, g: GField, c: float, n_angles: int, tol: float, max_depth: int) -> int:
    ths = [TWO_PI * j / n_angles for j in range(n_angles + 1)]

    def disp(th):
        z = _curve_point(g, c, th)
        d = P(z) - z
        if float(np.linalg.norm(d)) <= tol * max(1.0, float(np.linalg.norm(z))):
            raise BoundaryFixedPointError(f"displacement vanishes on V={c} at angle {th}")
        return math.atan2(d[1], d[0])

    total = 0.0

    def accumulate(t0, a0, t1, a1, depth):
        da = (a1 - a0 + math.pi) % TWO_PI - math.pi
        if abs(da) <= 0.5 * math.pi:
            return da
        if depth >= max_depth:
            raise BoundaryFixedPointError(f"displacement angle unresolved on V={c} near angle {t0}")
        tm = 0.5 * (t0 + t1)
        am = disp(tm)
        return accumulate(t0, a0, tm, am, depth + 1) + accumulate(tm, am, t1, a1, depth + 1)

    angles = [disp(t) for t in ths[:-1]]
    angles.append(angles[0])
    for k in range(n_angles):
        total += accumulate(ths[k], angles[k], ths[k + 1], angles[k + 1], 0)
    return int(round(total / TWO_PI))


def displacement_winding(
    sys_or_map,
    annulus: AnnulusSpec,
    n_angles: int = 64,
    g: GField | None = None,
    settings: FlowSettings = DEFAULT_SETTINGS,
    tol: float = 1e-12,
    max_depth: int = 20,
) -> dict:
    """Degree of ``z -> P(z) - z`` along the inner and outer boundary curves.

    ``sys_or_map`` is a system or any callable ``z -> P(z)``; with a bare
    callable the curves come from ``g``.
    """
    if g is None:
        if not isinstance(sys_or_map, ImpulsiveSystem):
            raise ValueError("a bare map needs g to define the boundary curves")
        g = sys_or_map.g
    P = _as_map(sys_or_map, settings)
    inner = _boundary_degree(P, g, annulus.a, n_angles, tol, max_depth)
    outer = _boundary_degree(P, g, annulus.b, n_angles, tol, max_depth)
    return {"inner": inner, "outer": outer, "differs": inner != outer}


def write_orbits_json(path, records, header: dict | None = None) -> None:
    doc = dict(header or {})
    doc["orbits"] = [r.to_dict() for r in records]
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
