"""Ship routes: Rice-type exceedance bounds and fatigue damage.

Headings and wave directions are mathematical angles in radians
(anticlockwise from the +x axis of the planar coordinates).  The angle of
attack used by the damage rate is ``heading - wave_direction``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import norm

from .deformation import DeformParams, anisotropy_from_h, eval_h


class RouteError(ValueError):
    pass


@dataclass(frozen=True)
class ShipConstants:
    C: float = 20.0
    beta: float = 3.0
    gamma_fatigue: float = 10 ** 12.73
    g: float = 9.81

    def __post_init__(self):
        for name in ("C", "beta", "gamma_fatigue", "g"):
            if not getattr(self, name) > 0:
                raise ValueError(f"ship constant {name} must be positive")


def _circular_mean(a, b):
    return np.arctan2(np.sin(a) + np.sin(b), np.cos(a) + np.cos(b))


@dataclass(frozen=True)
class Route:
    """Polyline route with per-waypoint speed, heading and wave direction.

    ``distance`` holds cumulative sailed distance in metres; the planar
    coordinates may be in any unit (e.g. degrees).  Segment ``i`` is sailed
    at ``speed[i]``.
    """

    points: np.ndarray
    speed: np.ndarray
    heading: np.ndarray
    wave_direction: np.ndarray
    distance: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        n = len(pts)
        arrays = {}
        for name in ("speed", "heading", "wave_direction", "distance"):
            a = np.broadcast_to(np.asarray(getattr(self, name), dtype=float), (n,)).copy()
            arrays[name] = a
        if n > 1 and np.any(np.linalg.norm(np.diff(pts, axis=0), axis=1) == 0):
            raise RouteError("consecutive waypoints must be distinct")
        if n > 1 and np.any(np.diff(arrays["distance"]) <= 0):
            raise RouteError("cumulative distance must increase strictly along the route")
        if np.any(arrays["speed"][: max(n - 1, 0)] <= 0):
            raise RouteError("speeds must be positive")
        object.__setattr__(self, "points", pts)
        for k, v in arrays.items():
            object.__setattr__(self, k, v)

    @classmethod
    def from_points(cls, points, speed=10.0, wave_direction=None, metres_per_unit: float = 1.0,
                    distance=None) -> "Route":
        """Build a route, deriving headings from the geometry.

        Interior headings are the mean direction of the two adjacent segments.
        A missing wave direction defaults to the heading (zero angle of attack).
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        n = len(pts)
        if n > 1:
            seg = np.diff(pts, axis=0)
            ang = np.arctan2(seg[:, 1], seg[:, 0])
            heading = np.empty(n)
            heading[0], heading[-1] = ang[0], ang[-1]
            heading[1:-1] = _circular_mean(ang[:-1], ang[1:])
            if distance is None:
                distance = np.concatenate([[0.0], np.cumsum(np.linalg.norm(seg, axis=1))]) * metres_per_unit
        else:
            heading = np.zeros(n)
            distance = np.zeros(n) if distance is None else distance
        wave = heading if wave_direction is None else wave_direction
        return cls(points=pts, speed=speed, heading=heading, wave_direction=wave, distance=distance)

    @property
    def n(self) -> int:
        return len(self.points)

    @property
    def segment_lengths(self) -> np.ndarray:
        """Sailed segment lengths in metres."""
        return np.diff(self.distance)

    @property
    def segment_durations(self) -> np.ndarray:
        return self.segment_lengths / self.speed[:-1]

    @property
    def times(self) -> np.ndarray:
        """Seconds from departure at each waypoint."""
        return np.concatenate([[0.0], np.cumsum(self.segment_durations)])

    @property
    def duration(self) -> float:
        return float(self.segment_durations.sum())

    @property
    def angle_of_attack(self) -> np.ndarray:
        return self.heading - self.wave_direction

    def reversed(self) -> "Route":
        """Sail the same waypoints backwards; headings turn by pi, waves stay."""
        d = self.distance
        # segment i of the reversed route is segment n-2-i of this one
        speed = np.concatenate([self.speed[-2::-1], self.speed[-1:]]) if self.n > 1 else self.speed
        return Route(
            points=self.points[::-1], speed=speed,
            heading=self.heading[::-1] + np.pi, wave_direction=self.wave_direction[::-1],
            distance=(d[-1] - d)[::-1],
        )

    def concatenate(self, other: "Route") -> "Route":
        """Join two routes sharing the junction waypoint.

        The junction takes its speed, heading and wave direction from ``other``,
        since those describe the segment that starts there.
        """
        if not np.allclose(self.points[-1], other.points[0]):
            raise RouteError("routes must share the junction waypoint")
        d2 = other.distance - other.distance[0] + self.distance[-1]
        speed = np.concatenate([self.speed[:-1], other.speed])
        return Route(
            points=np.vstack([self.points, other.points[1:]]),
            speed=speed,
            heading=np.concatenate([self.heading[:-1], other.heading]),
            wave_direction=np.concatenate([self.wave_direction[:-1], other.wave_direction]),
            distance=np.concatenate([self.distance, d2[1:]]),
        )


ROUTE_COLUMNS = ("x", "y", "speed", "heading", "wave_direction", "cumdist")


def read_route(path, metres_per_unit: float = 1.0) -> Route:
    """Read a route CSV with columns x, y and optional speed, heading,
    wave_direction (radians) and cumdist (metres)."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise RouteError("route file has no waypoints")
    cols = rows[0].keys()
    if "x" not in cols or "y" not in cols:
        raise RouteError("route file needs x and y columns")
    get = lambda name: np.array([float(r[name]) for r in rows]) if name in cols else None
    pts = np.column_stack([get("x"), get("y")])
    speed = get("speed")
    base = Route.from_points(pts, speed=10.0 if speed is None else speed,
                             wave_direction=get("wave_direction"),
                             metres_per_unit=metres_per_unit, distance=get("cumdist"))
    heading = get("heading")
    if heading is not None:
        wave = base.wave_direction if get("wave_direction") is not None else heading
        base = Route(points=base.points, speed=base.speed, heading=heading,
                     wave_direction=wave, distance=base.distance)
    return base


def write_route(route: Route, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ROUTE_COLUMNS)
        for i in range(route.n):
            w.writerow([repr(float(v)) for v in (route.points[i, 0], route.points[i, 1], route.speed[i],
                                                 route.heading[i], route.wave_direction[i], route.distance[i])])


# -- derivative standard deviation and the Rice bound -------------------------

def derivative_variance(velocity, H, kappa, nu) -> np.ndarray:
    """``kappa^2 / (2 (nu - 1)) * v^T H^-1 v`` for given local ``H`` and ``kappa``."""
    if nu <= 1:
        raise ValueError(
            f"nu = {nu} <= 1: the field is not mean-square differentiable (need alpha >= 3)"
        )
    v = np.atleast_2d(np.asarray(velocity, dtype=float))
    H = np.asarray(H, dtype=float).reshape(-1, 2, 2)
    kappa = np.asarray(kappa, dtype=float).reshape(-1)
    quad = np.einsum("ni,nij,nj->n", v, np.linalg.inv(H), v)
    out = kappa**2 / (2.0 * (nu - 1.0)) * quad
    return out[0] if np.ndim(velocity) == 1 else out


def derivative_sd(velocity, H, kappa, nu) -> np.ndarray:
    return np.sqrt(derivative_variance(velocity, H, kappa, nu))


def sigma_wdot(velocity, location, params: DeformParams) -> np.ndarray:
    """Standard deviation of the derivative of the standardized field along a path.

    ``H`` and ``kappa`` are evaluated at ``location``; ``velocity`` is in
    coordinate units per unit time.  Accepts single vectors or ``(n, 2)`` arrays.
    """
    if params.nu <= 1:
        return derivative_sd(velocity, np.eye(2), 1.0, params.nu)
    _, kappa, H = anisotropy_from_h(eval_h(np.atleast_2d(np.asarray(location, dtype=float)), params))
    return derivative_sd(velocity, H, kappa, params.nu)


def folded_normal_mean(a, sigma) -> np.ndarray:
    """``E|Z + a|`` for ``Z ~ N(0, sigma^2)``."""
    a = np.asarray(a, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(sigma > 0, a / np.where(sigma > 0, sigma, 1.0), np.sign(a) * np.inf)
        val = 2 * sigma * norm.pdf(z) + a * (1 - 2 * norm.cdf(-z))
    return np.where(sigma > 0, val, np.abs(a))


def _rice_integrand(a, sw, z):
    """Rice integrand of the bound (per unit path parameter)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(sw > 0, a / np.where(sw > 0, sw, 1.0), np.sign(a) * np.inf)
        first = np.where(sw > 0, sw * norm.pdf(r), 0.0)
        second = 0.5 * a * (2 * norm.cdf(r) - 1)
    return (first + second) * norm.pdf(z)


def exceedance_bound(route: Route, mu, sd, params: DeformParams, u) -> np.ndarray:
    """Upper bound on ``P(max_t X(route(t)) > u)`` for the log-scale field.

    ``mu`` and ``sd`` are the marginal mean and standard deviation of ``X`` at
    the waypoints.  The path integral uses the midpoint of each segment, with
    derivatives of ``mu`` and ``sd`` from differences of neighbouring
    waypoints.  The bound does not depend on how the path is timed, so the
    coordinate arc length serves as the path parameter.
    """
    mu = np.asarray(mu, dtype=float).reshape(-1)
    sd = np.asarray(sd, dtype=float).reshape(-1)
    if len(mu) != route.n or len(sd) != route.n:
        raise RouteError("mean and sd must have one value per waypoint")
    if np.any(~np.isfinite(mu)) or np.any(~np.isfinite(sd)) or np.any(sd <= 0):
        raise ValueError("mean and sd must be finite with sd > 0")
    u_arr = np.atleast_1d(np.asarray(u, dtype=float))
    start = norm.cdf((mu[0] - u_arr) / sd[0])
    if route.n == 1:
        out = np.clip(start, 0.0, 1.0)
        return out if np.ndim(u) else float(out[0])
    seg = np.diff(route.points, axis=0)
    length = np.linalg.norm(seg, axis=1)
    tangent = seg / length[:, None]
    mid = 0.5 * (route.points[1:] + route.points[:-1])
    sw = sigma_wdot(tangent, mid, params)
    mu_m = 0.5 * (mu[1:] + mu[:-1])
    sd_m = 0.5 * (sd[1:] + sd[:-1])
    dmu = np.diff(mu) / length
    dsd = np.diff(sd) / length
    uu = u_arr[:, None]
    a = (uu - mu_m) / sd_m**2 * dsd + dmu / sd_m
    z = (uu - mu_m) / sd_m
    integral = (_rice_integrand(a, sw, z) * length).sum(axis=1)
    out = np.clip(integral + start, 0.0, 1.0)
    return out if np.ndim(u) else float(out[0])


def empirical_exceedance(replicates, u_grid) -> np.ndarray:
    """Fraction of replicates whose maximum along the route exceeds each ``u``."""
    reps = np.atleast_2d(np.asarray(replicates, dtype=float))
    if reps.size == 0 or reps.shape[0] == 0:
        raise ValueError("no replicates given")
    mx = reps.max(axis=1)
    u = np.asarray(u_grid, dtype=float)
    return (mx[None, :] > u.reshape(-1, 1)).mean(axis=1).reshape(u.shape)


# -- fatigue -------------------------------------------------------------------

def fatigue_rate(h_s, v, theta, consts: ShipConstants = ShipConstants(), return_clamped: bool = False):
    """Narrow-band expected damage rate (per second).

    ``T_z = 3.75 sqrt(H_s)``; negative rates (fast following seas) are set to
    zero and counted.
    """
    h = np.asarray(h_s, dtype=float)
    if np.any(~(h > 0)):
        raise ValueError("significant wave height must be positive")
    Tz = 3.75 * np.sqrt(h)
    amp = 0.47 * consts.C**consts.beta * h**consts.beta / consts.gamma_fatigue
    rate = amp * (1.0 / Tz - 2 * np.pi * np.asarray(v) * np.cos(theta) / (consts.g * Tz**2))
    neg = rate < 0
    rate = np.where(neg, 0.0, rate)
    if np.ndim(rate) == 0:
        rate = float(rate)
    if return_clamped:
        return rate, int(np.count_nonzero(neg))
    return rate


def accumulated_damage(route: Route, h_s, consts: ShipConstants = ShipConstants()) -> np.ndarray:
    """Total damage along the route: each segment contributes the rate at its
    starting waypoint times its duration, so the final waypoint carries no weight.

    ``h_s`` is ``(n_waypoints,)`` or ``(K, n_waypoints)`` for several replicates.
    """
    h = np.asarray(h_s, dtype=float)
    if h.shape[-1] != route.n:
        raise RouteError(f"expected {route.n} wave heights per replicate, got {h.shape[-1]}")
    d = fatigue_rate(h, route.speed, route.angle_of_attack, consts)
    d = np.asarray(d)
    dt = route.segment_durations
    total = (d[..., :-1] * dt).sum(axis=-1)
    return total if np.ndim(total) else float(total)


@dataclass(frozen=True)
class DamageDistribution:
    damage: np.ndarray
    qq: np.ndarray | None = None


def qq_pairs(sample, reference, n_quantiles: int | None = None) -> np.ndarray:
    """Matched quantiles ``(q_sample, q_reference)``; sorted values when sizes agree."""
    a = np.sort(np.asarray(sample, dtype=float))
    b = np.sort(np.asarray(reference, dtype=float))
    if n_quantiles is None and len(a) == len(b):
        return np.column_stack([a, b])
    m = n_quantiles or min(len(a), len(b))
    p = (np.arange(m) + 0.5) / m
    return np.column_stack([np.quantile(a, p), np.quantile(b, p)])


def damage_distribution(replicates, route: Route, consts: ShipConstants = ShipConstants(),
                        reference=None) -> DamageDistribution:
    """Damage of each replicate (rows, metres) and optionally QQ pairs versus
    the damage sample of ``reference`` replicates."""
    reps = np.atleast_2d(np.asarray(replicates, dtype=float))
    if len(reps) < 2:
        raise ValueError("need at least two replicates")
    D = np.atleast_1d(accumulated_damage(route, reps, consts))
    qq = None
    if reference is not None:
        Dr = np.atleast_1d(accumulated_damage(route, np.atleast_2d(reference), consts))
        qq = qq_pairs(D, Dr)
    return DamageDistribution(damage=D, qq=qq)


def qq_envelope(reference_damage, simulated_damages, n_quantiles: int | None = None) -> np.ndarray:
    """Rows ``(q_reference, lo, median, hi)`` over simulated damage samples."""
    ref = np.sort(np.asarray(reference_damage, dtype=float))
    m = n_quantiles or len(ref)
    p = (np.arange(m) + 0.5) / m
    q_ref = np.quantile(ref, p)
    sims = np.array([np.quantile(np.asarray(s, dtype=float), p) for s in simulated_damages])
    return np.column_stack([q_ref, sims.min(axis=0), np.median(sims, axis=0), sims.max(axis=0)])
