"""Shared fixtures: named building blocks and a session-wide solve cache.

Tests refer to gauges, cones, and obstacles by short string keys so that
solves can be memoized across test modules (the objects themselves are not
hashable).  The cache stores full (report, problem, mesh) triples.
"""

import math
from functools import lru_cache

import numpy as np
import pytest

from wulffcap import (
    ConvexCone,
    Ellipse,
    EuclideanBall,
    LpGauge,
    PerturbedWulffBall,
    TruncatedProblem,
    WulffBall,
    anisotropic_quadratic,
    build_region,
    euclidean,
    mesh_region,
    shifted_euclidean,
    solve_truncated,
)
from wulffcap.gauges import scaled_euclidean


def make_gauge(name):
    return {
        "euclid": lambda: euclidean(2),
        "scaled2": lambda: scaled_euclidean(2.0),
        "quad": lambda: anisotropic_quadratic([[2.0, 0.6], [0.6, 1.0]]),
        "shifted": lambda: shifted_euclidean((0.3, 0.0)),
        "lp15": lambda: LpGauge(1.5),
        "lp3": lambda: LpGauge(3.0),
        "lp4": lambda: LpGauge(4.0),
    }[name]()


def make_cone(name):
    return {
        "full": ConvexCone.full_plane,
        "half": ConvexCone.half_plane,
        "quarter": lambda: ConvexCone.sector(math.pi / 2),
    }[name]()


def make_obstacle(name, dual):
    return {
        "wulff1": lambda: WulffBall(dual, 1.0),
        "wulff15": lambda: WulffBall(dual, 1.5),
        "ball1": lambda: EuclideanBall(1.0),
        "ellipse21": lambda: Ellipse(2.0, 1.0),
        "ripple02": lambda: PerturbedWulffBall(dual, 1.0, 0.2, 4),
        "ripple01": lambda: PerturbedWulffBall(dual, 1.0, 0.1, 4),
    }[name]()


@lru_cache(maxsize=None)
def solve_named(gauge_name, cone_name, obstacle_name, radius, h, exponent=None,
                adapt=False):
    """Memoized exterior solve; returns (report, problem, mesh)."""
    gauge = make_gauge(gauge_name)
    dual = gauge.dual()
    cone = make_cone(cone_name)
    obstacle = make_obstacle(obstacle_name, dual)
    region = build_region(cone, obstacle, radius, dual)
    mesh = mesh_region(region, h, adapt=adapt)
    problem = TruncatedProblem.exterior(mesh, gauge, exponent)
    report = solve_truncated(problem)
    return report, problem, mesh


@pytest.fixture(scope="session")
def solved():
    return solve_named


@pytest.fixture()
def rng():
    return np.random.default_rng(20260823)
