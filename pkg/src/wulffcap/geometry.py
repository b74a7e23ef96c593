"""Convex cones, star-shaped obstacles, and truncated exterior regions.

A cone is the intersection of half-planes through the origin; the supported
planar cases are the full plane (a two-dimensional free factor), the upper
half-plane (one free direction along the first axis), and a pointed sector
with opening below pi.  Obstacles are star-shaped with respect to their
center and are described by a polar radial function, which is what both the
boundary quadrature and the mapped mesh generator consume.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .gauges import DualGauge, Gauge

__all__ = [
    "ConvexCone",
    "StarShapedObstacle",
    "WulffBall",
    "EuclideanBall",
    "Ellipse",
    "PerturbedWulffBall",
    "Region",
    "RegionError",
    "build_region",
    "wulff_ball_contains",
]

_GEOM_TOL = 1e-12


class RegionError(ValueError):
    """A region precondition failed; the message names the precondition."""


def _unit(theta):
    theta = np.asarray(theta, dtype=float)
    return np.stack([np.cos(theta), np.sin(theta)], axis=-1)


class ConvexCone:
    """A planar convex cone given by inward unit normals of its walls.

    ``free_factor`` (the dimension of the largest linear subspace contained
    in the cone) is 2 for the full plane, 1 for the half-plane bounded by the
    first coordinate axis, and 0 for a pointed sector.
    """

    def __init__(self, free_factor: int, opening: float | None = None,
                 start: float = 0.0):
        if free_factor not in (0, 1, 2):
            raise RegionError("free factor must be 0, 1 or 2")
        self.free_factor = int(free_factor)
        self.dim = 2
        if free_factor == 2:
            self.opening = 2 * math.pi
            self.start = 0.0
            self._normals = np.zeros((0, 2))
            self._rays = np.zeros((0, 2))
        elif free_factor == 1:
            if opening is not None and not math.isclose(opening, math.pi):
                raise RegionError("half-plane cone has opening pi")
            self.opening = math.pi
            self.start = 0.0
            self._normals = np.array([[0.0, 1.0]])
            self._rays = np.array([[1.0, 0.0], [-1.0, 0.0]])
        else:
            if opening is None or not (0.0 < opening < math.pi):
                raise RegionError(
                    "pointed sector opening must lie in (0, pi) for a convex cone"
                )
            self.opening = float(opening)
            self.start = float(start)
            a, b = self.start, self.start + self.opening
            # inward normals of the two wall rays
            n1 = np.array([-math.sin(a), math.cos(a)])
            n2 = np.array([math.sin(b), -math.cos(b)])
            self._normals = np.stack([n1, n2])
            self._rays = np.stack([_unit(a), _unit(b)])

    @classmethod
    def full_plane(cls):
        return cls(2)

    @classmethod
    def half_plane(cls):
        return cls(1)

    @classmethod
    def sector(cls, opening, start=0.0):
        return cls(0, opening=opening, start=start)

    @property
    def normals(self):
        return self._normals

    def wall_rays(self):
        """Directions of the boundary rays emanating from the origin."""
        return self._rays

    def contains(self, x, tol: float = _GEOM_TOL):
        x = np.asarray(x, dtype=float)
        if self._normals.shape[0] == 0:
            return np.ones(x.shape[:-1], dtype=bool)
        scale = 1.0 + np.linalg.norm(x, axis=-1)
        vals = x @ self._normals.T
        return np.all(vals >= -tol * scale[..., None], axis=-1)

    def classify(self, x, tol: float = _GEOM_TOL):
        """-1 outside, 0 on the boundary, +1 in the interior."""
        x = np.asarray(x, dtype=float)
        if self._normals.shape[0] == 0:
            return np.ones(x.shape[:-1], dtype=int)
        scale = (1.0 + np.linalg.norm(x, axis=-1))[..., None]
        vals = x @ self._normals.T
        inside = np.all(vals > tol * scale, axis=-1)
        outside = np.any(vals < -tol * scale, axis=-1)
        out = np.zeros(x.shape[:-1], dtype=int)
        out[inside] = 1
        out[outside] = -1
        return out

    def angular_interval(self):
        """Angular range of the cone; (0, 2*pi) means the full circle."""
        if self.free_factor == 2:
            return 0.0, 2 * math.pi
        if self.free_factor == 1:
            return 0.0, math.pi
        return self.start, self.start + self.opening

    def on_free_axis(self, x, tol: float = 1e-10) -> bool:
        """Whether ``x`` lies in the free linear factor of the cone."""
        x = np.asarray(x, dtype=float)
        if self.free_factor == 2:
            return True
        if self.free_factor == 1:
            return bool(abs(x[1]) <= tol * (1.0 + abs(x[0])))
        return bool(np.linalg.norm(x) <= tol)

    def cache_key(self):
        return ("cone", self.free_factor, round(self.opening, 14),
                round(self.start, 14))

    def __repr__(self):
        if self.free_factor == 0:
            return f"ConvexCone.sector({self.opening!r}, start={self.start!r})"
        return ("ConvexCone.full_plane()" if self.free_factor == 2
                else "ConvexCone.half_plane()")


class StarShapedObstacle:
    """Base class: a bounded open set star-shaped about its center.

    The boundary is the polar graph ``center + radial(theta) * e(theta)``;
    subclasses supply ``radial`` and its angular derivative, from which the
    parametrization, tangents and outward normals follow.
    """

    center = np.zeros(2)
    label = "obstacle"

    def radial(self, theta):
        raise NotImplementedError

    def radial_deriv(self, theta):
        raise NotImplementedError

    def boundary_point(self, theta):
        theta = np.asarray(theta, dtype=float)
        return self.center + self.radial(theta)[..., None] * _unit(theta)

    def boundary_velocity(self, theta):
        """d/dtheta of the boundary parametrization."""
        theta = np.asarray(theta, dtype=float)
        e = _unit(theta)
        eperp = np.stack([-e[..., 1], e[..., 0]], axis=-1)
        r = self.radial(theta)[..., None]
        dr = self.radial_deriv(theta)[..., None]
        return dr * e + r * eperp

    def outward_normal(self, theta):
        v = self.boundary_velocity(theta)
        n = np.stack([v[..., 1], -v[..., 0]], axis=-1)
        return n / np.linalg.norm(n, axis=-1, keepdims=True)

    def contains(self, x, tol: float = 0.0):
        x = np.asarray(x, dtype=float)
        rel = x - self.center
        r = np.hypot(rel[..., 0], rel[..., 1])
        theta = np.arctan2(rel[..., 1], rel[..., 0])
        return r < self.radial(theta) - tol

    def max_dual_radius(self, dual: DualGauge, samples: int = 1440) -> float:
        """max of H0 over the boundary, for truncation-ball containment."""
        tt = np.linspace(0.0, 2 * math.pi, samples, endpoint=False)
        return float(np.max(dual.value(self.boundary_point(tt))))

    def diameter_proxy(self) -> float:
        tt = np.linspace(0.0, 2 * math.pi, 720, endpoint=False)
        r = self.radial(tt)
        return float(np.max(r) + np.max(np.abs(self.center)))

    def cache_key(self):
        raise NotImplementedError


class WulffBall(StarShapedObstacle):
    """Sublevel set ``{H0(x - center) < radius}`` of a dual gauge."""

    label = "wulff_ball"

    def __init__(self, dual: DualGauge, radius: float, center=(0.0, 0.0)):
        if not (radius > 0 and math.isfinite(radius)):
            raise RegionError("obstacle radius must be positive and finite")
        self.dual = dual
        self.radius = float(radius)
        self.center = np.asarray(center, dtype=float)

    def radial(self, theta):
        return self.radius / self.dual.value(_unit(theta))

    def radial_deriv(self, theta):
        theta = np.asarray(theta, dtype=float)
        e = _unit(theta)
        eperp = np.stack([-e[..., 1], e[..., 0]], axis=-1)
        h0 = self.dual.value(e)
        dh0 = np.einsum("...i,...i->...", self.dual.grad(e), eperp)
        return -self.radius * dh0 / h0**2

    def contains(self, x, tol: float = 0.0):
        x = np.asarray(x, dtype=float)
        return self.dual.value(x - self.center) < self.radius - tol

    def cache_key(self):
        return ("wulff", round(self.radius, 14), tuple(np.round(self.center, 14))) \
            + self.dual.cache_key()


class EuclideanBall(StarShapedObstacle):
    label = "euclidean_ball"

    def __init__(self, radius: float, center=(0.0, 0.0)):
        if not (radius > 0 and math.isfinite(radius)):
            raise RegionError("obstacle radius must be positive and finite")
        self.radius = float(radius)
        self.center = np.asarray(center, dtype=float)

    def radial(self, theta):
        theta = np.asarray(theta, dtype=float)
        return np.full(theta.shape, self.radius)

    def radial_deriv(self, theta):
        theta = np.asarray(theta, dtype=float)
        return np.zeros(theta.shape)

    def cache_key(self):
        return ("ball", round(self.radius, 14), tuple(np.round(self.center, 14)))


class Ellipse(StarShapedObstacle):
    """Axis-aligned ellipse with semi-axes ``(a, b)``."""

    label = "ellipse"

    def __init__(self, a: float, b: float, center=(0.0, 0.0)):
        if not (a > 0 and b > 0):
            raise RegionError("ellipse semi-axes must be positive")
        self.a = float(a)
        self.b = float(b)
        self.center = np.asarray(center, dtype=float)

    def radial(self, theta):
        theta = np.asarray(theta, dtype=float)
        return self.a * self.b / np.sqrt(
            (self.b * np.cos(theta)) ** 2 + (self.a * np.sin(theta)) ** 2
        )

    def radial_deriv(self, theta):
        theta = np.asarray(theta, dtype=float)
        c, s = np.cos(theta), np.sin(theta)
        denom = (self.b * c) ** 2 + (self.a * s) ** 2
        return -self.a * self.b * (self.a**2 - self.b**2) * s * c / denom**1.5

    def cache_key(self):
        return ("ellipse", round(self.a, 14), round(self.b, 14),
                tuple(np.round(self.center, 14)))


class PerturbedWulffBall(StarShapedObstacle):
    """Wulff ball with a multiplicative radial ripple ``1 + amp*cos(freq*t)``."""

    label = "perturbed_wulff_ball"

    def __init__(self, dual: DualGauge, radius: float, amplitude: float,
                 frequency: int, center=(0.0, 0.0)):
        if not (radius > 0 and math.isfinite(radius)):
            raise RegionError("obstacle radius must be positive and finite")
        if not (0.0 <= amplitude < 1.0):
            raise RegionError("perturbation amplitude must lie in [0, 1)")
        self.dual = dual
        self.radius = float(radius)
        self.amplitude = float(amplitude)
        self.frequency = int(frequency)
        self.center = np.asarray(center, dtype=float)

    def _ripple(self, theta):
        return 1.0 + self.amplitude * np.cos(self.frequency * np.asarray(theta, float))

    def radial(self, theta):
        return self.radius * self._ripple(theta) / self.dual.value(_unit(theta))

    def radial_deriv(self, theta):
        theta = np.asarray(theta, dtype=float)
        e = _unit(theta)
        eperp = np.stack([-e[..., 1], e[..., 0]], axis=-1)
        h0 = self.dual.value(e)
        dh0 = np.einsum("...i,...i->...", self.dual.grad(e), eperp)
        rip = self._ripple(theta)
        drip = -self.amplitude * self.frequency * np.sin(self.frequency * theta)
        return self.radius * (drip / h0 - rip * dh0 / h0**2)

    def cache_key(self):
        return ("perturbed_wulff", round(self.radius, 14),
                round(self.amplitude, 14), self.frequency,
                tuple(np.round(self.center, 14))) + self.dual.cache_key()


def wulff_ball_contains(dual: DualGauge, center, radius: float, x) -> np.ndarray:
    """Membership test ``H0(x - center) < radius`` (vectorized in x)."""
    x = np.asarray(x, dtype=float)
    return dual.value(x - np.asarray(center, dtype=float)) < radius


@dataclass(frozen=True)
class Region:
    """Truncated exterior region: cone, minus obstacle, inside ``{H0 < R}``.

    ``hub_on_boundary`` records whether the obstacle center sits on the cone
    boundary (annular-sector topology) or strictly inside (interior hole,
    full angular topology).
    """

    cone: ConvexCone
    obstacle: StarShapedObstacle
    radius: float
    dual: DualGauge
    hub_on_boundary: bool = field(default=False, compare=False)

    def cache_key(self):
        return (self.cone.cache_key(), self.obstacle.cache_key(),
                round(self.radius, 14), self.dual.cache_key())


def build_region(cone: ConvexCone, obstacle: StarShapedObstacle, radius: float,
                 dual: DualGauge) -> Region:
    """Validate and assemble a truncated exterior region.

    Preconditions checked: the truncation radius is positive and the closed
    obstacle lies strictly inside the truncation ball; the obstacle center
    lies in the closed cone; and either the center is on the cone boundary
    (the obstacle may poke through the walls there) or the obstacle closure
    is strictly inside the open cone, so the remaining region is connected.
    """
    if not (isinstance(radius, (int, float)) and math.isfinite(radius)
            and radius > 0):
        raise RegionError("truncation radius must be a positive finite number")
    c = obstacle.center
    if not cone.contains(c, tol=1e-9):
        raise RegionError("obstacle center must lie in the closed cone")
    maxdual = obstacle.max_dual_radius(dual)
    if maxdual >= radius:
        raise RegionError(
            "truncation radius too small: obstacle reaches H0 = %.6g >= R = %.6g"
            % (maxdual, radius)
        )
    hub_on_boundary = bool(cone.classify(np.asarray(c, dtype=float)) == 0) \
        if cone.free_factor < 2 else False
    if cone.free_factor < 2 and not hub_on_boundary:
        tt = np.linspace(0.0, 2 * math.pi, 1440, endpoint=False)
        pts = obstacle.boundary_point(tt)
        if not np.all(cone.classify(pts) == 1):
            raise RegionError(
                "obstacle with interior center must stay strictly inside the "
                "cone; move the center to the cone boundary or shrink the shape"
            )
    return Region(cone, obstacle, float(radius), dual,
                  hub_on_boundary=hub_on_boundary)
