"""Anisotropic perimeter, cone-restricted volume, and isoperimetric data.

The anisotropic perimeter of a set ``E`` relative to an open cone ``S`` is
``int_{boundary E ∩ S} H(nu) ds``; with a counterclockwise parametrization
``p(t)`` this is ``int H((p2', -p1')) dt`` by homogeneity, so no explicit
normalization is needed.  Volumes use Green's theorem over the same boundary
arcs (wall segments drop out because ``<x, nu> = 0`` there) and are
cross-checked by seeded Monte-Carlo sampling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .gauges import (DualGauge, Gauge, LpGauge, anisotropic_quadratic,
                     euclidean, shifted_euclidean)
from .geometry import (ConvexCone, Ellipse, EuclideanBall,
                       PerturbedWulffBall, StarShapedObstacle, WulffBall)

__all__ = [
    "IsoperimetryResult",
    "VolumeDisagreementError",
    "anisotropic_perimeter",
    "cone_volume",
    "isoperimetric_quotient",
    "reference_quotient",
    "unit_wulff_ball",
    "boundary_intervals",
    "standard_battery",
]


class VolumeDisagreementError(RuntimeError):
    """Quadrature and Monte-Carlo volume estimates disagree beyond tolerance."""


_LEGENDRE_CACHE: dict = {}
_REFERENCE_CACHE: dict = {}


def _leggauss(order):
    if order not in _LEGENDRE_CACHE:
        _LEGENDRE_CACHE[order] = np.polynomial.legendre.leggauss(order)
    return _LEGENDRE_CACHE[order]


def boundary_intervals(shape: StarShapedObstacle, cone: ConvexCone,
                       samples: int = 2048):
    """Parameter intervals of the shape boundary inside the open cone.

    Wall crossings are refined by bracketed root finding to 1e-12.
    """
    if cone.normals.shape[0] == 0:
        return [(0.0, 2 * math.pi)]
    tt = np.linspace(0.0, 2 * math.pi, samples, endpoint=False)
    pts = shape.boundary_point(tt)
    phi_all = pts @ cone.normals.T
    phi = phi_all.min(axis=1)

    def phi_at(t):
        return float(np.min(shape.boundary_point(np.atleast_1d(t)) @ cone.normals.T))

    inside = phi > 0
    if inside.all():
        return [(0.0, 2 * math.pi)]
    if not inside.any():
        return []
    # locate sign changes between consecutive samples (periodic)
    crossings = []
    for k in range(samples):
        k2 = (k + 1) % samples
        if inside[k] != inside[k2]:
            a = tt[k]
            b = tt[k2] if k2 != 0 else 2 * math.pi
            root = brentq(phi_at, a, b, xtol=1e-12, rtol=8.9e-16)
            crossings.append((root, inside[k]))
    crossings.sort()
    intervals = []
    for idx, (root, was_inside) in enumerate(crossings):
        if was_inside:
            continue  # this root is an entry point handled below
        nxt = crossings[(idx + 1) % len(crossings)][0]
        if nxt <= root:
            nxt += 2 * math.pi
        intervals.append((root, nxt))
    return intervals


def _interval_quadrature(shape, intervals, integrand, order, panels_per_radian):
    total = 0.0
    nodes, weights = _leggauss(order)
    for a, b in intervals:
        npan = max(2, int(math.ceil((b - a) * panels_per_radian)))
        edges = np.linspace(a, b, npan + 1)
        mid = 0.5 * (edges[:-1] + edges[1:])
        half = 0.5 * (edges[1:] - edges[:-1])
        t = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
        w = (half[:, None] * weights[None, :]).ravel()
        total += float(np.dot(integrand(t), w))
    return total


def anisotropic_perimeter(shape: StarShapedObstacle, cone: ConvexCone,
                          gauge: Gauge, order: int = 12,
                          panels_per_radian: float = 8.0):
    """Perimeter of the shape inside the cone, measured by the gauge.

    Returns ``(value, error_estimate)`` where the estimate comes from
    doubling the panel count.
    """
    intervals = boundary_intervals(shape, cone)

    def integrand(t):
        v = shape.boundary_velocity(t)
        return gauge.value(np.stack([v[..., 1], -v[..., 0]], axis=-1))

    coarse = _interval_quadrature(shape, intervals, integrand, order,
                                  panels_per_radian)
    fine = _interval_quadrature(shape, intervals, integrand, order,
                                2.0 * panels_per_radian)
    return fine, abs(fine - coarse)


@dataclass(frozen=True)
class VolumeEstimate:
    value: float
    error: float
    monte_carlo: float
    monte_carlo_sigma: float


def cone_volume(shape: StarShapedObstacle, cone: ConvexCone, order: int = 12,
                panels_per_radian: float = 8.0, mc_budget: int = 200_000,
                rng=None) -> VolumeEstimate:
    """Area of ``shape ∩ cone`` by boundary quadrature with an MC cross-check.

    Green's theorem over the boundary arcs inside the cone suffices because
    wall segments satisfy ``<x, nu> = 0``.  Raises VolumeDisagreementError
    when the two estimates disagree beyond five times the combined tolerance.
    """
    intervals = boundary_intervals(shape, cone)

    def integrand(t):
        p = shape.boundary_point(t)
        v = shape.boundary_velocity(t)
        return 0.5 * (p[..., 0] * v[..., 1] - p[..., 1] * v[..., 0])

    coarse = _interval_quadrature(shape, intervals, integrand, order,
                                  panels_per_radian)
    fine = _interval_quadrature(shape, intervals, integrand, order,
                                2.0 * panels_per_radian)
    err = abs(fine - coarse)

    if rng is None:
        rng = np.random.default_rng(777)
    rmax = float(np.max(shape.radial(np.linspace(0, 2 * math.pi, 720))))
    lo = shape.center - rmax
    hi = shape.center + rmax
    pts = rng.uniform(lo, hi, size=(int(mc_budget), 2))
    hit = shape.contains(pts) & cone.contains(pts)
    frac = float(np.mean(hit))
    box = float(np.prod(hi - lo))
    mc = frac * box
    sigma = box * math.sqrt(max(frac * (1 - frac), 1e-12) / mc_budget)
    if abs(fine - mc) > 5.0 * (err + 3.0 * sigma + 1e-12):
        raise VolumeDisagreementError(
            "volume estimates disagree: quadrature %.8g vs Monte-Carlo %.8g "
            "(tolerance %.3g)" % (fine, mc, 5.0 * (err + 3.0 * sigma))
        )
    return VolumeEstimate(fine, err, mc, sigma)


def unit_wulff_ball(gauge: Gauge, dual: DualGauge | None = None,
                    center=(0.0, 0.0)) -> WulffBall:
    """The unit ball of the dual gauge (the Wulff shape of ``gauge``)."""
    return WulffBall(gauge.dual() if dual is None else dual, 1.0, center=center)


def reference_quotient(gauge: Gauge, cone: ConvexCone,
                       dual: DualGauge | None = None) -> float:
    """Isoperimetric quotient of the Wulff ball centered at the cone vertex.

    This is the cone-restricted optimum; it is cached per (gauge, cone) pair.
    """
    key = (gauge.cache_key(), cone.cache_key())
    if key not in _REFERENCE_CACHE:
        ball = unit_wulff_ball(gauge, dual)
        per, _ = anisotropic_perimeter(ball, cone, gauge)
        vol = cone_volume(ball, cone).value
        _REFERENCE_CACHE[key] = per / vol ** 0.5
    return _REFERENCE_CACHE[key]


@dataclass(frozen=True)
class IsoperimetryResult:
    label: str
    perimeter: float
    perimeter_error: float
    volume: float
    volume_monte_carlo: float
    quotient: float
    reference: float
    deficit: float


def standard_battery():
    """Bundled (shape, cone, gauge) triples for isoperimetric testing.

    Each entry is a dict with keys ``label``, ``shape``, ``cone``, ``gauge``
    and ``expect_wulff``.  The ``expect_wulff`` entries are vertex-centered
    Wulff balls of their gauge (the equality cases of the cone inequality);
    the remaining shapes are strictly suboptimal: an ellipse, an off-axis
    ball in the half-plane, and rippled Wulff balls.
    """
    full = ConvexCone.full_plane()
    half = ConvexCone.half_plane()
    quarter = ConvexCone.sector(math.pi / 2)
    eu = euclidean(2)
    l15 = LpGauge(1.5, 2)
    l3 = LpGauge(3.0, 2)
    l4 = LpGauge(4.0, 2)
    quad = anisotropic_quadratic([[2.0, 0.6], [0.6, 1.0]])
    shog = shifted_euclidean([0.3, 0.0])
    entries = []

    def wulff(label, gauge, cone, radius=1.0):
        entries.append({
            "label": label,
            "shape": WulffBall(gauge.dual(), radius),
            "cone": cone,
            "gauge": gauge,
            "expect_wulff": True,
        })

    wulff("euclid_disk_full", eu, full)
    wulff("euclid_disk_half", eu, half)
    wulff("euclid_disk_quarter_r2", eu, quarter, radius=2.0)
    wulff("l4_wulff_full", l4, full)
    wulff("l4_wulff_quarter_r07", l4, quarter, radius=0.7)
    wulff("l15_wulff_full", l15, full)
    wulff("l3_wulff_sector2", l3, ConvexCone.sector(2.0))
    wulff("quadratic_wulff_full", quad, full)
    wulff("shifted_wulff_full", shog, full)
    entries.append({
        "label": "euclid_ellipse_full",
        "shape": Ellipse(2.0, 1.0),
        "cone": full,
        "gauge": eu,
        "expect_wulff": False,
    })
    entries.append({
        "label": "euclid_ball_offaxis_half",
        "shape": EuclideanBall(1.0, center=(0.3, 1.5)),
        "cone": half,
        "gauge": eu,
        "expect_wulff": False,
    })
    entries.append({
        "label": "euclid_rippled_full",
        "shape": PerturbedWulffBall(eu.dual(), 1.0, 0.15, 5),
        "cone": full,
        "gauge": eu,
        "expect_wulff": False,
    })
    entries.append({
        "label": "l4_rippled_quarter",
        "shape": PerturbedWulffBall(l4.dual(), 1.0, 0.2, 4),
        "cone": quarter,
        "gauge": l4,
        "expect_wulff": False,
    })
    return entries


def isoperimetric_quotient(shape: StarShapedObstacle, cone: ConvexCone,
                           gauge: Gauge, dual: DualGauge | None = None,
                           mc_budget: int = 200_000, rng=None) -> IsoperimetryResult:
    """Quotient ``P_H(E; S) / |E ∩ S|^(1/2)`` and its deficit to the optimum."""
    per, per_err = anisotropic_perimeter(shape, cone, gauge)
    vol = cone_volume(shape, cone, mc_budget=mc_budget, rng=rng)
    quot = per / vol.value ** 0.5
    ref = reference_quotient(gauge, cone, dual)
    return IsoperimetryResult(
        label=shape.label,
        perimeter=per,
        perimeter_error=per_err,
        volume=vol.value,
        volume_monte_carlo=vol.monte_carlo,
        quotient=quot,
        reference=ref,
        deficit=quot - ref,
    )
