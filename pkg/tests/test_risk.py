import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import norm

from deformspde.deformation import DeformParams
from deformspde.risk import (
    Route,
    RouteError,
    ShipConstants,
    accumulated_damage,
    damage_distribution,
    derivative_sd,
    derivative_variance,
    empirical_exceedance,
    exceedance_bound,
    fatigue_rate,
    folded_normal_mean,
    qq_envelope,
    qq_pairs,
    read_route,
    sigma_wdot,
    write_route,
)

BOX = (10.0, 10.0)
D1 = 0.47 * 20**3 / 10**12.73 / 3.75


def _alpha3(h=(0.0, 0.0, 0.0), k=0):
    return DeformParams.constant(list(h), k, BOX, alpha=3)


def test_derivative_sd_examples():
    assert derivative_sd([1.0, 0.0], np.eye(2), 1.0, 2.0) ** 2 == pytest.approx(0.5)
    assert derivative_sd([0.0, 0.0], np.eye(2), 1.0, 2.0) == 0.0
    assert derivative_sd([1.0, 0.0], np.diag([4.0, 1.0]), 1.0, 2.0) ** 2 == pytest.approx(1 / 8)
    assert derivative_variance([1.0, 0.0], np.eye(2), 1.0, 2.0) == 0.5
    assert derivative_variance([1.0, 0.0], np.diag([4.0, 1.0]), 1.0, 2.0) == 0.125


def test_sigma_wdot_from_params():
    p = _alpha3()
    assert sigma_wdot([1.0, 0.0], [3.0, 3.0], p) ** 2 == pytest.approx(0.5)
    # H = diag(4, 1) has kappa = 2 in this parametrization
    p = _alpha3((0.0, -math.log(4), 0.0))
    assert sigma_wdot([1.0, 0.0], [3.0, 3.0], p) ** 2 == pytest.approx(0.5)
    assert sigma_wdot([0.0, 1.0], [3.0, 3.0], p) ** 2 == pytest.approx(2.0)
    out = sigma_wdot(np.ones((4, 2)), np.ones((4, 2)), p)
    assert out.shape == (4,)
    with pytest.raises(ValueError, match="differentiable"):
        sigma_wdot([1.0, 0.0], [0.0, 0.0], DeformParams.identity(0, BOX, alpha=2))


def test_single_point_bound():
    r = Route.from_points([[1.0, 1.0]])
    assert exceedance_bound(r, [0.0], [1.0], _alpha3(), 0.0) == pytest.approx(0.5)
    assert exceedance_bound(r, [0.0], [1.0], _alpha3(), 1.3) == pytest.approx(norm.cdf(-1.3))


def test_stationary_bound_closed_form_and_quadrature():
    p = _alpha3()
    L = 6.0
    pts = np.column_stack([np.linspace(1, 1 + L, 100), np.full(100, 2.0)])
    r = Route.from_points(pts)
    u = np.array([0.5, 1.5, 2.5])
    got = exceedance_bound(r, np.zeros(100), np.ones(100), p, u)
    sw = math.sqrt(0.5)
    closed = L * sw * norm.pdf(0) * norm.pdf(u) + norm.cdf(-u)
    np.testing.assert_allclose(got, closed, rtol=1e-12)
    for ui, gi in zip(u, got):
        integral, _ = quad(lambda t: sigma_wdot([1.0, 0.0], [1 + t, 2.0], p) * norm.pdf(0) * norm.pdf(ui), 0, L)
        assert gi == pytest.approx(integral + norm.cdf(-ui), rel=1e-9)


def test_bound_converges_with_refinement():
    rng = np.random.default_rng(0)
    p = DeformParams(beta=rng.normal(0, 0.3, (3, 3, 3)), bbox=BOX, alpha=3)
    curve = lambda n: np.column_stack([np.linspace(1, 9, n), 5 + 3 * np.sin(np.linspace(0, 3, n))])
    mu = lambda s: 0.2 * s[:, 0] - 0.1 * s[:, 1]
    sd = lambda s: 1 + 0.05 * s[:, 0]
    vals = []
    for n in (200, 400, 800):
        s = curve(n)
        vals.append(exceedance_bound(Route.from_points(s), mu(s), sd(s), p, 2.5))
    assert abs(vals[1] - vals[2]) < abs(vals[0] - vals[1]) + 1e-12
    assert abs(vals[1] / vals[2] - 1) < 1e-3


def test_bound_input_errors():
    r = Route.from_points([[0.0, 0.0], [1.0, 0.0]])
    with pytest.raises(RouteError):
        exceedance_bound(r, [0.0], [1.0], _alpha3(), 0.0)
    with pytest.raises(ValueError, match="sd > 0"):
        exceedance_bound(r, [0.0, 0.0], [1.0, 0.0], _alpha3(), 0.0)
    with pytest.raises(RouteError, match="distinct"):
        Route.from_points([[0.0, 0.0], [0.0, 0.0]])
    with pytest.raises(RouteError, match="increase"):
        Route(points=[[0, 0], [1, 0]], speed=1.0, heading=0.0, wave_direction=0.0, distance=[5.0, 1.0])


@pytest.mark.parametrize("a", [-2.0, 0.0, 2.0])
@pytest.mark.parametrize("s", [0.5, 1.0, 2.0])
def test_folded_normal_against_monte_carlo(a, s):
    z = np.random.default_rng(17).standard_normal(2_000_000)
    assert folded_normal_mean(a, s) == pytest.approx(np.abs(s * z + a).mean(), rel=0.01)


def test_folded_normal_degenerate():
    assert folded_normal_mean(-1.5, 0.0) == 1.5
    assert folded_normal_mean(0.0, 1.0) == pytest.approx(math.sqrt(2 / math.pi))


def test_empirical_exceedance():
    rng = np.random.default_rng(2)
    reps = rng.lognormal(1, 0.3, (50, 20))
    assert empirical_exceedance(reps, reps.min() - 1) == 1.0
    assert empirical_exceedance(reps, reps.max()) == 0.0
    grid = np.arange(2, 12.5, 0.5)
    p = empirical_exceedance(reps, grid)
    assert p.shape == (21,) and np.all(np.diff(p) <= 0)
    with pytest.raises(ValueError):
        empirical_exceedance(np.zeros((0, 3)), grid)


def test_fatigue_rate_examples():
    assert fatigue_rate(1.0, 0.0, 0.0) == pytest.approx(1.867e-10, rel=1e-3)
    assert fatigue_rate(1.0, 0.0, 0.0) == pytest.approx(D1, rel=1e-12)
    assert fatigue_rate(1.0, 12.0, math.pi / 2) == pytest.approx(D1, rel=1e-12)
    v0 = 9.81 * 3.75 / (2 * math.pi)
    assert v0 == pytest.approx(5.855, abs=1e-3)
    assert fatigue_rate(1.0, v0, 0.0) == pytest.approx(0.0, abs=1e-24)
    rate, clamped = fatigue_rate(np.ones(3), np.array([1.0, 8.0, 9.0]), 0.0, return_clamped=True)
    assert clamped == 2 and rate[0] > 0 and np.all(rate[1:] == 0)
    with pytest.raises(ValueError):
        fatigue_rate(0.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        ShipConstants(C=-1.0)


def _straight(x0, x1, n, wave=math.pi / 2):
    pts = np.column_stack([np.linspace(x0, x1, n), np.zeros(n)])
    return Route.from_points(pts, speed=10.0, wave_direction=wave, metres_per_unit=1000.0)


def test_constant_damage_over_an_hour():
    r = _straight(0.0, 36.0, 37)
    assert r.duration == pytest.approx(3600.0)
    D = accumulated_damage(r, np.ones(37))
    assert D == pytest.approx(D1 * 3600, rel=1e-12)
    assert D == pytest.approx(6.72e-7, rel=1e-3)
    with pytest.raises(RouteError, match="expected 37"):
        accumulated_damage(r, np.ones(36))


def test_damage_is_additive_over_concatenation():
    rng = np.random.default_rng(3)
    a = Route.from_points(rng.uniform(0, 5, (8, 2)), speed=rng.uniform(5, 12, 8), wave_direction=0.3)
    b = Route.from_points(np.vstack([a.points[-1], rng.uniform(0, 5, (6, 2))]), speed=rng.uniform(5, 12, 7),
                          wave_direction=0.3)
    ab = a.concatenate(b)
    ha, hb = rng.uniform(1, 6, 8), rng.uniform(1, 6, 7)
    hb[0] = ha[-1]
    total = accumulated_damage(ab, np.concatenate([ha, hb[1:]]))
    assert total == pytest.approx(accumulated_damage(a, ha) + accumulated_damage(b, hb), rel=1e-14, abs=0)
    with pytest.raises(RouteError, match="junction"):
        a.concatenate(Route.from_points([[99.0, 99.0], [100.0, 99.0]]))


def test_reversed_route_changes_damage():
    r = _straight(0.0, 100.0, 50, wave=0.0)
    h = np.linspace(1.0, 6.0, 50)
    back = r.reversed()
    assert back.duration == pytest.approx(r.duration)
    np.testing.assert_allclose(back.angle_of_attack, np.pi)
    assert accumulated_damage(back, h[::-1]) != pytest.approx(accumulated_damage(r, h), rel=1e-3)
    # following seas at 10 m/s are clamped for small waves, so heading into them is worse
    assert accumulated_damage(back, h[::-1]) > accumulated_damage(r, h)


def test_damage_distribution_and_qq():
    r = _straight(0.0, 20.0, 10)
    rng = np.random.default_rng(4)
    reps = rng.lognormal(0.5, 0.2, (30, 10))
    dist = damage_distribution(reps, r, reference=reps)
    np.testing.assert_array_equal(dist.qq[:, 0], dist.qq[:, 1])
    assert dist.damage.shape == (30,)
    with pytest.raises(ValueError):
        damage_distribution(reps[:1], r)
    assert qq_pairs(np.arange(10.0), np.arange(20.0), 5).shape == (5, 2)
    env = qq_envelope(dist.damage, [dist.damage, 2 * dist.damage])
    assert env.shape == (30, 4)
    assert np.all(env[:, 1] <= env[:, 2]) and np.all(env[:, 2] <= env[:, 3])


def test_route_file_round_trip(tmp_path):
    r = Route.from_points([[0, 0], [1, 1], [2, 1.5]], speed=[8.0, 9.0, 9.0], wave_direction=[0.1, 0.2, 0.3],
                          metres_per_unit=1000.0)
    write_route(r, tmp_path / "r.csv")
    back = read_route(tmp_path / "r.csv")
    for name in ("points", "speed", "heading", "wave_direction", "distance"):
        np.testing.assert_array_equal(getattr(back, name), getattr(r, name))
    (tmp_path / "p.csv").write_text("x,y\n0,0\n3,4\n")
    plain = read_route(tmp_path / "p.csv", metres_per_unit=2.0)
    assert plain.distance[-1] == 10.0 and plain.speed[0] == 10.0
    np.testing.assert_allclose(plain.angle_of_attack, 0.0)
    (tmp_path / "e.csv").write_text("x,y\n")
    with pytest.raises(RouteError, match="no waypoints"):
        read_route(tmp_path / "e.csv")
    (tmp_path / "q.csv").write_text("lon,lat\n0,0\n")
    with pytest.raises(RouteError, match="x and y"):
        read_route(tmp_path / "q.csv")
