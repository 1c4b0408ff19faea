import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from treedecay.cloud import PointCloud
from treedecay.errors import EmptyCloudError, FormatError, StageError
from treedecay.terrain import (Dtm, PtdParams, Triangulation, build_dtm, delaunay_triangulate,
                               filter_ground, find_triangles, incircle, normalize_heights,
                               orient2d, read_dtm_text, write_dtm_text)


def circumcircle_violations(pts, tris):
    """Brute force: (triangle, vertex) pairs with the vertex strictly inside the circumcircle."""
    bad = []
    for t, (a, b, c) in enumerate(tris):
        for v in range(len(pts)):
            if v in (a, b, c):
                continue
            if incircle(*pts[a], *pts[b], *pts[c], *pts[v]) > 0:
                bad.append((t, v))
    return bad


def assert_valid(pts, tin):
    tris = tin.triangles()
    for a, b, c in tris:
        assert orient2d(*pts[a], *pts[b], *pts[c]) > 0
    assert circumcircle_violations(pts, tris) == []
    assert tin.vertex_indices() == list(range(len(pts)))
    h = len(tin.hull_vertices())
    assert len(tris) == 2 * len(pts) - 2 - h


# -- predicates ---------------------------------------------------------------

def test_orient2d_signs_and_exact_fallback():
    assert orient2d(0, 0, 1, 0, 0, 1) > 0
    assert orient2d(0, 0, 0, 1, 1, 0) < 0
    assert orient2d(0, 0, 1, 1, 2, 2) == 0
    # nearly collinear points where naive float evaluation is unreliable
    assert orient2d(0.5, 0.5, 12.0, 12.0, 24.0, 24.0) == 0
    assert orient2d(0.1, 0.1, 0.2, 0.2, 0.3, 0.3 + 2 ** -52) > 0


def test_incircle_cocircular_is_zero():
    assert incircle(0, 0, 1, 0, 1, 1, 0, 1) == 0
    assert incircle(0, 0, 1, 0, 0, 1, 0.4, 0.4) > 0
    assert incircle(0, 0, 1, 0, 0, 1, 2, 2) < 0


# -- Delaunay -----------------------------------------------------------------

def test_three_points_one_triangle():
    tin = delaunay_triangulate([[0, 0], [1, 0], [0, 1]])
    assert len(tin.triangles()) == 1


def test_unit_square_two_triangles_and_legal_diagonal():
    pts = np.array([[0, 0], [1, 0], [1, 1], [0, 1.0]])
    tin = delaunay_triangulate(pts)
    assert len(tin.triangles()) == 2
    assert circumcircle_violations(pts, tin.triangles()) == []


def test_random_points_pass_empty_circumcircle_oracle():
    pts = np.random.default_rng(3).uniform(0, 10, (50, 2))
    assert_valid(pts, delaunay_triangulate(pts))


def test_grid_points_with_many_cocircular_quadruples():
    g = np.arange(6, dtype=float)
    pts = np.array([(x, y) for y in g for x in g])
    tin = delaunay_triangulate(pts)
    assert len(tin.triangles()) == 2 * 36 - 2 - 20
    assert circumcircle_violations(pts, tin.triangles()) == []


@settings(max_examples=25, deadline=None)
@given(st.lists(st.tuples(st.integers(-20, 20), st.integers(-20, 20)), min_size=3, max_size=40,
                unique=True))
def test_delaunay_property_on_integer_lattice(raw):
    pts = np.array(raw, dtype=float)
    if np.linalg.matrix_rank(pts[1:] - pts[0]) < 2:
        with pytest.raises(ValueError, match="collinear"):
            delaunay_triangulate(pts)
        return
    assert_valid(pts, delaunay_triangulate(pts))


def test_delaunay_errors():
    with pytest.raises(ValueError):
        delaunay_triangulate([[0, 0], [1, 1]])
    with pytest.raises(ValueError, match="collinear"):
        delaunay_triangulate([[0, 0], [1, 1], [2, 2], [3, 3]])


def test_duplicate_vertex_maps_to_existing():
    tin = Triangulation.build([[0, 0], [1, 0], [0, 1]])
    assert tin.insert(1, 0) == 1
    assert len(tin.triangles()) == 1


def test_locate_and_find_triangles_agree():
    pts = np.random.default_rng(4).uniform(0, 10, (30, 2))
    tin = delaunay_triangulate(pts)
    tris = tin.triangles()
    q = np.random.default_rng(5).uniform(-1, 11, (200, 2))
    found = find_triangles(pts[tris], q)
    for (x, y), f in zip(q, found):
        loc = tin.locate(x, y)
        assert (loc >= 0) == (f >= 0)
        if f >= 0:
            a, b, c = pts[tris[f]]
            assert min(orient2d(*a, *b, x, y), orient2d(*b, *c, x, y),
                       orient2d(*c, *a, x, y)) >= 0


# -- ground filter ------------------------------------------------------------

def test_planar_cloud_is_all_ground():
    xy = np.random.default_rng(0).uniform(0, 30, (100, 2))
    cloud = PointCloud(np.column_stack([xy, np.zeros(100)]))
    assert filter_ground(cloud).all()


def test_single_high_point_is_not_ground():
    rng = np.random.default_rng(1)
    xy = rng.uniform(0, 20, (200, 2))
    xyz = np.column_stack([xy, np.zeros(200)])
    xyz = np.vstack([xyz, [10.0, 10.0, 10.0]])
    mask = filter_ground(PointCloud(xyz))
    assert mask[:200].all() and not mask[200]


def test_tilted_plane_is_all_ground():
    rng = np.random.default_rng(2)
    xy = rng.uniform(0, 100, (600, 2))
    cloud = PointCloud(np.column_stack([xy, 0.05 * xy[:, 0]]))
    assert filter_ground(cloud).all()


def test_ground_filter_needs_three_seed_cells():
    cloud = PointCloud([[0, 0, 0], [1, 1, 0], [2, 0, 0]])
    with pytest.raises(StageError, match="terrain"):
        filter_ground(cloud)
    with pytest.raises(EmptyCloudError):
        filter_ground(PointCloud.empty())


def test_ptd_params_validation():
    with pytest.raises(ValueError):
        PtdParams(max_angle=90)
    with pytest.raises(ValueError):
        PtdParams(max_dist=0)


def test_ground_filter_with_canopy_keeps_trees_off_ground():
    rng = np.random.default_rng(6)
    xy = rng.uniform(0, 40, (1500, 2))
    ground = np.column_stack([xy, 0.02 * xy[:, 1] + rng.normal(0, 0.03, 1500)])
    canopy = np.column_stack([rng.uniform(15, 25, (300, 2)), rng.uniform(5, 20, 300)])
    mask = filter_ground(PointCloud(np.vstack([ground, canopy])))
    assert mask[:1500].mean() > 0.95
    assert not mask[1500:].any()


# -- DTM and normalization ----------------------------------------------------

def test_dtm_constant_ground():
    xy = np.random.default_rng(0).uniform(0, 5, (50, 2))
    cloud = PointCloud(np.column_stack([xy, np.full(50, 3.0)]))
    dtm = build_dtm(cloud, np.ones(50, bool))
    assert np.all(dtm.grid == 3.0)


def test_dtm_fill_takes_nearest_with_lower_index_tie():
    cloud = PointCloud([[0.5, 0.5, 0.0], [2.5, 0.5, 2.0]])
    dtm = build_dtm(cloud, [True, True], cell=1.0)
    np.testing.assert_array_equal(dtm.grid, [[0.0, 0.0, 2.0]])


def test_dtm_single_point_and_errors():
    dtm = build_dtm(PointCloud([[4.0, 5.0, 7.5]]), [True])
    assert dtm.shape == (1, 1) and dtm.grid[0, 0] == 7.5
    with pytest.raises(StageError):
        build_dtm(PointCloud([[0, 0, 0.0]]), [False])
    with pytest.raises(ValueError):
        Dtm((0, 0), 0.0, [[1.0]])


def test_normalize_heights_examples():
    dtm = Dtm((0, 0), 1.0, np.full((4, 4), 10.0))
    cloud = PointCloud([[1, 1, 30.0], [2, 2, 10.0], [3, 3, 9.5]], [1, 2, 3], [[.1, .2, .3]] * 3)
    out = normalize_heights(cloud, dtm)
    np.testing.assert_allclose(out.z, [20.0, 0.0, 0.0])
    np.testing.assert_array_equal(out.xyz[:, :2], cloud.xyz[:, :2])
    np.testing.assert_array_equal(out.intensity, cloud.intensity)
    np.testing.assert_array_equal(out.channels, cloud.channels)


def test_bilinear_dtm_reproduces_planes():
    xs, ys = np.meshgrid(np.arange(6) + 0.5, np.arange(5) + 0.5)
    dtm = Dtm((0, 0), 1.0, 2.0 + 0.3 * xs - 0.1 * ys)
    q = np.random.default_rng(0).uniform(0.5, 4.5, (50, 2))
    np.testing.assert_allclose(dtm.elevation(q[:, 0], q[:, 1]), 2 + 0.3 * q[:, 0] - 0.1 * q[:, 1])


def test_dtm_text_round_trip():
    dtm = Dtm((1.5, -2.0), 0.5, np.arange(6.0).reshape(2, 3) / 7)
    back = read_dtm_text(write_dtm_text(dtm))
    assert back.origin == dtm.origin and back.cell == dtm.cell
    np.testing.assert_array_equal(back.grid, dtm.grid)
    with pytest.raises(FormatError):
        read_dtm_text("origin 0 0\ncell 1\ndims 2 2\nnodata -9999\n1 2\n")
