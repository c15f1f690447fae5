"""Command-line front end.

Every output file starts with a header carrying a timestamp, the seed and the
fully resolved configuration; apart from the timestamp line, outputs are
byte-identical for identical inputs.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import energy_geometry, orbits, poincare, twist
from .impulsive_flow import FlowSettings, LiftedState, evolve
from .models import TWO_PI, ImpulseSchedule, ImpulsiveSystem, make_linear, system_from_config

log = logging.getLogger("impulsive_duffing")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_CHECK = 0, 2, 3, 4

LINEAR_EXAMPLE = {"g": {"kind": "linear"}, "forcing": None, "impulse": {"t1": math.pi / 2}}


class ConfigError(ValueError):
    pass


def _load_config(path: str | None) -> dict:
    if path is None:
        return json.loads(json.dumps(LINEAR_EXAMPLE))
    p = Path(path)
    try:
        with p.open() as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def _params(cfg: dict, section: str) -> dict:
    sec = cfg.get(section) or {}
    if not isinstance(sec, dict):
        raise ConfigError(f"section {section!r} must be an object")
    return dict(sec)


def _pick(args, name: str, sec: dict, default):
    v = getattr(args, name, None)
    if v is not None:
        return v
    return sec.get(name, default)


def _system(cfg: dict) -> ImpulsiveSystem:
    try:
        return system_from_config(cfg)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid model config: {exc}") from exc


def _settings(args, cfg: dict) -> FlowSettings:
    tol = _params(cfg, "tolerances")
    rel = args.rel_tol if args.rel_tol is not None else tol.get("rel_tol", 1e-10)
    ab = args.abs_tol if args.abs_tol is not None else tol.get("abs_tol", 1e-12)
    try:
        return FlowSettings(rel_tol=float(rel), abs_tol=float(ab))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


class _Run:
    """Resolved inputs of one invocation plus header helpers."""

    def __init__(self, args, command: str):
        self.args = args
        self.command = command
        self.cfg = _load_config(args.config)
        self.settings = _settings(args, self.cfg)
        self.out = Path(args.out).resolve()
        self.out.mkdir(parents=True, exist_ok=True)
        self.seed = int(args.seed)
        self.resolved: dict = {}

    def header(self) -> dict:
        return {
            "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
            "command": self.command,
            "seed": self.seed,
            "config": self.cfg,
            "config_path": str(Path(self.args.config).resolve()) if self.args.config else None,
            "parameters": self.resolved,
            "tolerances": {"rel_tol": self.settings.rel_tol, "abs_tol": self.settings.abs_tol},
        }

    def write_csv(self, name: str, columns, rows, extra: dict | None = None) -> Path:
        path = self.out / name
        h = self.header()
        if extra:
            h.update(extra)
        with path.open("w", newline="") as fh:
            fh.write(f"# timestamp: {h.pop('timestamp')}\n")
            for k in sorted(h):
                fh.write(f"# {k}: {json.dumps(h[k], sort_keys=True)}\n")
            w = csv.writer(fh)
            w.writerow(columns)
            for r in rows:
                w.writerow([_fmt(v) for v in r])
        return path

    def write_json(self, name: str, body: dict) -> Path:
        path = self.out / name
        doc = self.header()
        doc.update(body)
        with path.open("w") as fh:
            json.dump(_clean(doc), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _clean(obj):
    """JSON-safe copy: NaN and inf become null, numpy scalars become Python."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


# -- commands ---------------------------------------------------------------


def cmd_simulate(run: _Run) -> int:
    sec = _params(run.cfg, "simulate")
    sys_ = _system(run.cfg)
    start = [float(v) for v in _pick(run.args, "start", sec, [1.0, 0.0])]
    span = [float(v) for v in _pick(run.args, "span", sec, [0.0, TWO_PI])]
    samples = int(_pick(run.args, "samples", sec, 201))
    if len(start) != 2 or len(span) != 2 or span[1] <= span[0] or samples < 2:
        raise ConfigError("need start (x, y), an increasing span and at least 2 samples")
    run.resolved = {"start": start, "span": span, "samples": samples}
    settings = FlowSettings(run.settings.rel_tol, run.settings.abs_tol, dense_output=True)
    s0 = LiftedState.at(span[0], *start)
    end, diag = evolve(sys_, s0, tuple(span), settings)
    V0 = sys_.g.energy(*start)
    rows = []
    imp_times = {t for t, _, _ in diag.trajectory.impulses}
    ts = [t for t in np.linspace(span[0], span[1], samples) if t not in imp_times and t < end.t]
    for t, x, y, phi in diag.trajectory.sample(ts):
        rows.append((t, 0, x, y, phi, ""))
    for t, pre, post in diag.trajectory.impulses:
        rows.append((t, 1, pre.x, pre.y, pre.phi, "pre"))
        rows.append((t, 2, post.x, post.y, post.phi, "post"))
    if end.t not in imp_times:
        rows.append((end.t, 3, end.x, end.y, end.phi, ""))
    rows.sort(key=lambda r: (r[0], r[1]))
    rows = [
        (t, x, y, math.hypot(x, y), phi, sys_.g.energy(x, y), abs(sys_.g.energy(x, y) - V0), flag)
        for t, _, x, y, phi, flag in rows
    ]
    extra = {
        "winding": diag.winding,
        "energy_drift": diag.energy_drift,
        "impulse_times": diag.impulse_times,
        "accepted_steps": diag.accepted_steps,
        "rejected_steps": diag.rejected_steps,
    }
    path = run.write_csv("trajectory.csv", ("t", "x", "y", "rho", "phi", "V", "abs_V_drift", "impulse"), rows, extra)
    print(f"wrote {path}; end=({end.x:.12g}, {end.y:.12g}) winding={diag.winding:.12g}")
    return EXIT_OK


def cmd_tau_scan(run: _Run) -> int:
    sec = _params(run.cfg, "tau_scan")
    sys_ = _system(run.cfg)
    c_lo = float(_pick(run.args, "c_lo", sec, 1e2))
    c_hi = float(_pick(run.args, "c_hi", sec, 1e6))
    points = int(_pick(run.args, "points", sec, 200))
    ms = [int(m) for m in _pick(run.args, "m", sec, [1, 2, 3, 4, 5, 6, 7])]
    if not (0 < c_lo < c_hi) or points < 3 or not ms or min(ms) < 1:
        raise ConfigError("need 0 < c_lo < c_hi, points >= 3 and positive m values")
    run.resolved = {"c_lo": c_lo, "c_hi": c_hi, "points": points, "m": ms}
    levels = twist.log_levels(c_lo, c_hi, points)
    table = energy_geometry.tau_table(sys_.g, levels)
    run.write_csv("tau_scan.csv", ("c", "h", "h1", "tau"), table)
    if c_lo < energy_geometry.min_level(sys_.g):
        raise energy_geometry.LevelError(f"c_lo={c_lo} lies below the first star-shaped level")
    annuli = twist.annuli_from_table(sys_.g, levels, [row[3] for row in table], ms)
    body = {"annuli": [a.to_dict() for a in annuli], "best_m": twist.pick_m(annuli)}
    if not annuli:
        body["note"] = "tau does not oscillate across 2*pi/m for any candidate m"
        print(body["note"])
    path = run.write_json("annuli.json", body)
    print(f"wrote {path} with {len(annuli)} annuli")
    return EXIT_OK


def _annulus(run: _Run, sec: dict) -> twist.AnnulusSpec:
    path = _pick(run.args, "annuli", sec, None)
    index = int(_pick(run.args, "index", sec, 0))
    if path is not None:
        try:
            items = twist.read_annuli_json(path)
        except (OSError, KeyError, TypeError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read annuli from {path}: {exc}") from exc
        if not (0 <= index < len(items)):
            raise ConfigError(f"annulus index {index} out of range ({len(items)} available)")
        an = items[index]
    elif "annulus" in sec:
        a = sec["annulus"]
        try:
            an = twist.AnnulusSpec(
                a=float(a["a"]), b=float(a["b"]), m=int(a["m"]), alpha=float(a.get("alpha", math.nan)),
                kind=a.get("kind", "A"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid inline annulus: {exc}") from exc
    else:
        raise ConfigError("no annulus given (use --annuli FILE or an inline 'annulus' entry)")
    run.resolved.update({"annulus": an.to_dict(), "annulus_index": index, "annuli_file": path})
    return an


def cmd_twist_check(run: _Run) -> int:
    sec = _params(run.cfg, "twist_check")
    sys_ = _system(run.cfg)
    an = _annulus(run, sec)
    samples = int(_pick(run.args, "samples", sec, 64))
    if samples < 8:
        raise ConfigError("need at least 8 boundary samples")
    run.resolved["samples"] = samples
    rep = twist.twist_check(sys_, an, samples, run.settings)
    path = run.write_json("twist_check.json", {"report": rep.to_dict()})
    print(f"wrote {path}; verdict={rep.verdict} beta1={rep.beta1:.6g} beta2={rep.beta2:.6g}")
    return EXIT_OK if rep.passed else EXIT_CHECK


def cmd_find_orbits(run: _Run) -> int:
    sec = _params(run.cfg, "find_orbits")
    sys_ = _system(run.cfg)
    an = _annulus(run, sec)
    grid = [int(v) for v in _pick(run.args, "grid", sec, [3, 8])]
    need = int(_pick(run.args, "min_count", sec, 2))
    if len(grid) != 2 or min(grid) < 1:
        raise ConfigError("grid needs two positive counts")
    run.resolved.update({"grid": grid, "min_count": need})
    recs = orbits.find_fixed_points(sys_, an, tuple(grid), run.settings, seed=run.seed, annulus_id=run.resolved["annulus_index"])
    recs = [orbits.verify_orbit(sys_, r, 2, run.settings) for r in recs]
    path = run.write_json("orbits.json", {"orbits": [r.to_dict() for r in recs]})
    print(f"wrote {path} with {len(recs)} fixed points")
    return EXIT_OK if len(recs) >= need else EXIT_CHECK


def cmd_gap_profile(run: _Run) -> int:
    sec = _params(run.cfg, "gap_profile")
    forced = _system(run.cfg)
    auto = forced.with_forcing(None)
    gammas = [float(v) for v in _pick(run.args, "gammas", sec, [1e2, 1e3, 1e4, 1e5])]
    n_angles = int(_pick(run.args, "n_angles", sec, 64))
    eps = float(_pick(run.args, "eps", sec, 0.1))
    if not gammas or min(gammas) <= 0 or n_angles < 1:
        raise ConfigError("need positive gammas and n_angles >= 1")
    run.resolved = {"gammas": gammas, "n_angles": n_angles, "eps": eps}
    prof = twist.gap_profile(forced, auto, gammas, n_angles, run.settings)
    star = twist.gamma_star(prof, eps)
    path = run.write_csv("gap_profile.csv", ("gamma", "max_gap"), prof, {"gamma_star": star})
    print(f"wrote {path}; gamma_star={star}")
    return EXIT_OK


def cmd_reproduce_linear_example(run: _Run) -> int:
    sec = _params(run.cfg, "reproduce_linear_example")
    n = int(_pick(run.args, "grid_size", sec, 10))
    run.resolved = {"grid_size": n, "model": LINEAR_EXAMPLE}
    sys_ = ImpulsiveSystem(make_linear(), None, ImpulseSchedule(math.pi / 2))
    xs = np.linspace(-2.0, 2.0, n)
    worst1 = worst2 = 0.0
    for x0 in xs:
        for y0 in xs:
            p1 = poincare.map_point(sys_, (x0, y0), run.settings)
            p2 = poincare.map_point(sys_, p1, run.settings)
            worst1 = max(worst1, float(np.max(np.abs(p1 - (-x0, y0)))))
            worst2 = max(worst2, float(np.max(np.abs(p2 - (x0, y0)))))
    out = poincare.poincare_map(sys_, (1.0, 0.0), run.settings)
    checks = {
        "P(x,y) = (-x, y)": worst1 < 1e-7,
        "P^2 = identity": worst2 < 1e-7,
        "winding from (1,0) = -3 pi": abs(out.winding + 3 * math.pi) < 1e-6,
        "jacobian = [[-1,0],[0,1]]": bool(np.allclose(out.jacobian, [[-1, 0], [0, 1]], atol=1e-7)),
    }
    body = {
        "max_error_P": worst1,
        "max_error_P2": worst2,
        "winding_from_1_0": out.winding,
        "jacobian": out.jacobian.tolist(),
        "checks": checks,
    }
    path = run.write_json("linear_example.json", body)
    for k, v in checks.items():
        print(f"{'PASS' if v else 'FAIL'}  {k}")
    print(f"wrote {path}")
    return EXIT_OK if all(checks.values()) else EXIT_CHECK


COMMANDS = {
    "simulate": cmd_simulate,
    "tau-scan": cmd_tau_scan,
    "twist-check": cmd_twist_check,
    "find-orbits": cmd_find_orbits,
    "gap-profile": cmd_gap_profile,
    "reproduce-linear-example": cmd_reproduce_linear_example,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="model/run config (JSON); defaults to the linear example")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--rel-tol", type=float, dest="rel_tol")
    common.add_argument("--abs-tol", type=float, dest="abs_tol")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="impulsive-duffing", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="evolve one trajectory and dump it")
    p.add_argument("--start", type=float, nargs=2)
    p.add_argument("--span", type=float, nargs=2)
    p.add_argument("--samples", type=int)

    p = sub.add_parser("tau-scan", parents=[common], help="period function table and annuli")
    p.add_argument("--c-lo", type=float, dest="c_lo")
    p.add_argument("--c-hi", type=float, dest="c_hi")
    p.add_argument("--points", type=int)
    p.add_argument("--m", type=int, nargs="+")

    for name, hlp in (("twist-check", "boundary sign test on one annulus"), ("find-orbits", "fixed points in one annulus")):
        p = sub.add_parser(name, parents=[common], help=hlp)
        p.add_argument("--annuli", help="annuli.json written by tau-scan")
        p.add_argument("--index", type=int)
        if name == "twist-check":
            p.add_argument("--samples", type=int)
        else:
            p.add_argument("--grid", type=int, nargs=2)
            p.add_argument("--min-count", type=int, dest="min_count")

    p = sub.add_parser("gap-profile", parents=[common], help="forced vs autonomous winding gap")
    p.add_argument("--gammas", type=float, nargs="+")
    p.add_argument("--n-angles", type=int, dest="n_angles")
    p.add_argument("--eps", type=float)

    p = sub.add_parser("reproduce-linear-example", parents=[common], help="check the harmonic example")
    p.add_argument("--grid-size", type=int, dest="grid_size")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        run = _Run(args, args.command)
        return COMMANDS[args.command](run)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ArithmeticError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except energy_geometry.LevelError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
