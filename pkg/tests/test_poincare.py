import math

import numpy as np
import pytest

from impulsive_duffing.impulsive_flow import LiftedState, evolve
from impulsive_duffing.poincare import (
    area_defect,
    fd_jacobian,
    iterate,
    jacobian,
    map_point,
    poincare_grid,
    poincare_map,
    write_grid_csv,
)

PI = math.pi
REFLECT = np.array([[-1.0, 0.0], [0.0, 1.0]])


def _random_points(rng, n, lo=1.0, hi=100.0):
    r = 10 ** rng.uniform(math.log10(lo), math.log10(hi), n)
    th = rng.uniform(0, 2 * PI, n)
    return np.column_stack([r * np.cos(th), r * np.sin(th)])


def test_linear_map_examples(linear):
    out = poincare_map(linear, (0.7, -1.2))
    assert out.end == pytest.approx((-0.7, -1.2), abs=1e-9)
    out = poincare_map(linear, (0.0, 1.3))
    assert out.end == pytest.approx((0.0, 1.3), abs=1e-9)
    out = poincare_map(linear, (1.0, 0.0))
    assert out.winding == pytest.approx(-3 * PI, abs=1e-8)
    assert out.energy_drift < 1e-10


def test_linear_jacobian_closed_form(linear):
    for z in [(1.0, 0.0), (0.3, -1.7), (-2.0, 2.0)]:
        assert jacobian(linear, z) == pytest.approx(REFLECT, abs=1e-8)
    free = linear.with_impulse(None)
    assert jacobian(free, (0.4, 0.1)) == pytest.approx(np.eye(2), abs=1e-8)


def test_winding_matches_evolve_exactly(semilinear_forced):
    z = (15.0, -4.0)
    out = poincare_map(semilinear_forced, z)
    _, d = evolve(semilinear_forced, LiftedState.at(0.0, *z), (0.0, 2 * PI))
    assert out.winding == d.winding


def test_composition_matches_long_run(semilinear_forced):
    z = np.array([8.0, 2.0])
    twice = map_point(semilinear_forced, map_point(semilinear_forced, z))
    end, _ = evolve(semilinear_forced, LiftedState.at(0.0, *z), (0.0, 4 * PI))
    assert np.allclose(twice, [end.x, end.y], atol=1e-8 * max(1.0, np.linalg.norm(z)))


def test_autonomous_map_stays_on_level(semilinear):
    g = semilinear.g
    rng = np.random.default_rng(3)
    for z in _random_points(rng, 5):
        w = map_point(semilinear, z)
        V = g.energy(*z)
        assert abs(g.energy(*w) - V) <= 1e-8 * max(1.0, V)


def test_linear_map_is_period_two(linear):
    xs = np.linspace(-2, 2, 4)
    for x in xs:
        for y in xs:
            assert iterate(linear, (x, y), 2) == pytest.approx([x, y], abs=1e-7)


@pytest.mark.parametrize("forced", [False, True])
def test_jacobian_against_finite_differences(semilinear, semilinear_forced, forced):
    sys_ = semilinear_forced if forced else semilinear
    rng = np.random.default_rng(11 + forced)
    for z in _random_points(rng, 6):
        J = jacobian(sys_, z)
        F = fd_jacobian(sys_, z)
        scale = np.max(np.abs(J))
        assert np.max(np.abs(J - F)) <= 1e-4 * scale


def test_map_reverses_orientation(semilinear, semilinear_forced):
    # the velocity reversal has det -1; the flow legs have det +1
    for sys_ in (semilinear, semilinear_forced):
        assert np.linalg.det(jacobian(sys_, (20.0, 5.0))) == pytest.approx(-1.0, abs=1e-6)


def test_area_defect(linear, semilinear, semilinear_forced):
    assert area_defect(linear, (0.5, 0.5)) < 1e-9
    rng = np.random.default_rng(5)
    for z in _random_points(rng, 5):
        assert area_defect(semilinear, z) < 1e-6
        assert area_defect(semilinear_forced, z) < 1e-6


def test_grid_csv(tmp_path, linear):
    rows = poincare_grid(linear, [(1.0, 0.0), (0.0, 1.0)])
    assert rows[0][2:4] == pytest.approx((-1.0, 0.0), abs=1e-9)
    assert rows[0][5] == pytest.approx(-1.0, abs=1e-9)
    p = tmp_path / "grid.csv"
    write_grid_csv(p, rows, ["seed: 0"])
    lines = p.read_text().splitlines()
    assert lines[0] == "# seed: 0"
    assert lines[1] == "x0,y0,x1,y1,winding,det"
    assert len(lines) == 4
