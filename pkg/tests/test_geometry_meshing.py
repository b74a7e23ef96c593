"""Cones, obstacles, truncated regions, and the mapped mesh generator."""

import math

import numpy as np
import pytest

from wulffcap.gauges import LpGauge, euclidean
from wulffcap.geometry import (
    ConvexCone,
    Ellipse,
    EuclideanBall,
    PerturbedWulffBall,
    Region,
    RegionError,
    WulffBall,
    build_region,
    wulff_ball_contains,
)
from wulffcap.meshing import (
    TAG_OBSTACLE,
    TAG_OUTER,
    TAG_WALL,
    MeshError,
    load_mesh,
    mesh_quality,
    mesh_region,
    save_mesh,
)

QUARTER = ConvexCone.sector(math.pi / 2)


# ---------------------------------------------------------------------- cones


def test_full_plane_contains_everything(rng):
    cone = ConvexCone.full_plane()
    pts = rng.normal(size=(200, 2))
    assert np.all(cone.contains(pts))
    assert np.all(cone.classify(pts) == 1)


def test_half_plane_membership():
    cone = ConvexCone.half_plane()
    assert cone.contains((0.3, 1.5))
    assert not cone.contains((0.3, -0.1))
    assert cone.classify((5.0, 0.0)) == 0  # on the wall


def test_quarter_plane_membership_and_scaling(rng):
    pts = np.abs(rng.normal(size=(100, 2))) + 0.01
    assert np.all(QUARTER.contains(pts))
    assert not QUARTER.contains((-1.0, 1.0))
    # cones are scale invariant
    for t in (0.5, 2.0, 10.0):
        assert np.all(QUARTER.classify(t * pts) == QUARTER.classify(pts))


def test_sector_walls():
    cone = ConvexCone.sector(2.0, start=0.5)
    rays = cone.wall_rays()
    assert len(rays) == 2
    for ray in rays:
        assert cone.classify(np.asarray(ray) * 3.0) == 0


# ------------------------------------------------------------------ obstacles


def test_wulff_ball_contains_l43_points():
    dual = LpGauge(4.0).dual()  # dual norm is the l^{4/3} norm
    assert wulff_ball_contains(dual, (0.0, 0.0), 1.0, (0.5, 0.5))
    assert not wulff_ball_contains(dual, (0.0, 0.0), 1.0, (0.9, 0.9))
    # 0.9 * 2^{3/4} > 1 even though the euclidean norm is > 1 as well;
    # the axis point (0.99, 0) stays inside
    assert wulff_ball_contains(dual, (0.0, 0.0), 1.0, (0.99, 0.0))


def test_boundary_point_consistency(rng):
    dual = LpGauge(4.0).dual()
    shapes = [
        WulffBall(dual, 1.5),
        EuclideanBall(1.0, center=(0.3, 1.5)),
        Ellipse(2.0, 1.0),
        PerturbedWulffBall(dual, 1.0, 0.2, 4),
    ]
    tt = rng.uniform(0.0, 2 * np.pi, size=50)
    for s in shapes:
        pts = s.boundary_point(tt)
        # containment flips under a +/- 1e-6 nudge along the outward normal
        outward = s.outward_normal(tt)
        assert np.all(s.contains(pts - 1e-6 * outward, tol=1e-9))
        assert not np.any(s.contains(pts + 1e-6 * outward, tol=-1e-9))
        # finite-difference tangent matches boundary_velocity
        step = 1e-6
        fd = (s.boundary_point(tt + step) - s.boundary_point(tt - step)) / (2 * step)
        np.testing.assert_allclose(s.boundary_velocity(tt), fd, rtol=1e-5, atol=1e-5)


def test_ellipse_radial_and_normal():
    e = Ellipse(2.0, 1.0)
    p = e.boundary_point(0.0)
    np.testing.assert_allclose(p, [2.0, 0.0], atol=1e-12)
    n = e.outward_normal(np.pi / 2)
    np.testing.assert_allclose(n, [0.0, 1.0], atol=1e-12)


# -------------------------------------------------------------------- regions


def test_build_region_rejects_bad_radius():
    dual = euclidean(2).dual()
    obstacle = EuclideanBall(1.0)
    cone = ConvexCone.full_plane()
    for bad in (0.0, -2.0, math.inf, math.nan):
        with pytest.raises(RegionError, match="truncation radius"):
            build_region(cone, obstacle, bad, dual)


def test_build_region_rejects_obstacle_touching_truncation():
    dual = euclidean(2).dual()
    with pytest.raises(RegionError, match="truncation radius too small"):
        build_region(ConvexCone.full_plane(), EuclideanBall(3.0), 2.0, dual)


def test_region_fields():
    dual = euclidean(2).dual()
    reg = build_region(QUARTER, WulffBall(dual, 1.0), 8.0, dual)
    assert isinstance(reg, Region)
    assert reg.radius == 8.0


# --------------------------------------------------------------------- meshes


def quarter_mesh(h, gauge=None, adapt=False):
    g = gauge or euclidean(2)
    dual = g.dual()
    reg = build_region(QUARTER, WulffBall(dual, 1.0), 8.0, dual)
    return mesh_region(reg, h, adapt=adapt), dual


def test_tag_partition_and_counts():
    mesh, _ = quarter_mesh(0.2)
    tags = mesh.facet_tags
    assert set(np.unique(tags)) == {TAG_OBSTACLE, TAG_WALL, TAG_OUTER}
    # every stored facet is a boundary facet with exactly one adjacent cell
    assert len(mesh.facet_cells) == len(tags)
    for cells in mesh.facet_cells:
        assert np.ndim(cells) == 0 or len(np.atleast_1d(cells)) == 1


def test_boundary_vertices_on_analytic_boundary():
    mesh, dual = quarter_mesh(0.2)
    v = mesh.vertices
    for tag, check in (
        (TAG_OBSTACLE, lambda p: np.abs(dual.value(p) - 1.0)),
        (TAG_OUTER, lambda p: np.abs(dual.value(p) - 8.0)),
    ):
        idx = np.unique(mesh.facets[mesh.facet_tags == tag])
        assert np.max(check(v[idx])) < 1e-10


def test_wall_vertices_on_wall_rays():
    mesh, _ = quarter_mesh(0.2)
    idx = np.unique(mesh.facets[mesh.facet_tags == TAG_WALL])
    pts = mesh.vertices[idx]
    # quarter plane: walls are the coordinate axes
    off_axis = np.min(np.abs(pts), axis=1)
    assert np.max(off_axis) < 1e-10


def test_refinement_scaling():
    coarse, _ = quarter_mesh(0.2)
    fine, _ = quarter_mesh(0.1)
    tri_ratio = fine.stats["num_triangles"] / coarse.stats["num_triangles"]
    assert 3.4 < tri_ratio < 4.6
    obs_ratio = np.sum(fine.facet_tags == TAG_OBSTACLE) / np.sum(
        coarse.facet_tags == TAG_OBSTACLE
    )
    assert 1.7 < obs_ratio < 2.3


def test_min_angle_floor_on_uniform_meshes():
    for h in (0.2, 0.1):
        mesh, _ = quarter_mesh(h)
        assert mesh.stats["min_angle_deg"] >= 20.0
        assert not mesh.stats["adaptive"]


def test_adaptive_mesh_flag_and_validity():
    mesh, _ = quarter_mesh(0.2, gauge=LpGauge(4.0), adapt=True)
    assert mesh.stats["adaptive"]
    v, t = mesh.vertices, mesh.triangles
    e1 = v[t[:, 1]] - v[t[:, 0]]
    e2 = v[t[:, 2]] - v[t[:, 0]]
    areas = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    assert np.min(areas) > 0.0  # consistent orientation, no degenerate cells


def test_stats_match_mesh_quality():
    mesh, _ = quarter_mesh(0.2)
    q = mesh_quality(mesh.vertices, mesh.triangles)
    assert q["min_angle_deg"] == pytest.approx(mesh.stats["min_angle_deg"], rel=1e-12)
    assert q["num_triangles"] == mesh.stats["num_triangles"]


def test_save_load_roundtrip(tmp_path):
    mesh, _ = quarter_mesh(0.2)
    path = tmp_path / "mesh.txt"
    save_mesh(mesh, path)
    back = load_mesh(path)
    np.testing.assert_array_equal(back.vertices, mesh.vertices)
    np.testing.assert_array_equal(back.triangles, mesh.triangles)
    np.testing.assert_array_equal(back.facets, mesh.facets)
    np.testing.assert_array_equal(back.facet_tags, mesh.facet_tags)
    assert back.h == mesh.h
    assert tuple(back.lattice) == tuple(mesh.lattice)
