import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from treedecay.cloud import PointCloud
from treedecay.errors import EmptyCloudError
from treedecay.projection import (AZIMUTHS, FINAL_HEIGHT, FINAL_WIDTH, CanvasSpec, TreeProjector,
                                  ViewImage, downscale, image_sidecar_csv, project_views,
                                  render_view, rotate_z, to_ppm_pixels)
from treedecay.segmentation import TreeSegment
from treedecay.synthetic import SyntheticSpec, generate_synthetic_tree


def zbuffer_oracle(cloud, spec, azimuth):
    """Per-point loop: keep the smallest rotated y per pixel, earlier point on ties."""
    rot = rotate_z(cloud, azimuth)
    cx = rot.xy_centroid()[0]
    w, h = spec.width_px, spec.height_px
    best = {}
    for i in range(len(rot)):
        col = int(np.floor((rot.x[i] - cx + spec.world_width / 2) * spec.px_per_m))
        row = h - 1 - int(np.floor(rot.z[i] * spec.px_per_m))
        if not (0 <= col < w and 0 <= row < h):
            continue
        if (row, col) not in best or rot.y[i] < rot.y[best[row, col]]:
            best[row, col] = i
    img = np.zeros((h, w, 3))
    for (row, col), i in best.items():
        img[row, col] = cloud.channels[i]
    return img


def random_tree(rng, n):
    xyz = np.column_stack([rng.uniform(-2, 2, n), rng.uniform(-2, 2, n), rng.uniform(0, 8, n)])
    return PointCloud(xyz, np.zeros(n), rng.uniform(0, 1, (n, 3)))


def test_rotate_z_examples():
    cloud = PointCloud([[1.0, 0.0, 2.0], [-1.0, 0.0, 3.0]], [1, 2], [[.1, .2, .3], [.4, .5, .6]])
    assert rotate_z(cloud, 0).equals(cloud)
    np.testing.assert_allclose(rotate_z(cloud, 360).xyz, cloud.xyz, atol=1e-9)
    out = rotate_z(cloud, 90)
    np.testing.assert_allclose(out.xyz[0], [0.0, 1.0, 2.0], atol=1e-12)
    np.testing.assert_array_equal(out.channels, cloud.channels)
    np.testing.assert_array_equal(out.z, cloud.z)


def test_single_point_lights_center_pixel():
    spec = CanvasSpec(4.0, 6.0)
    img = render_view(PointCloud([[0, 0, 3.0]], [0], [[1, 0.5, 0.25]]), spec, 0)
    lit = np.argwhere(img.pixels.any(axis=2))
    assert lit.tolist() == [[spec.height_px // 2 - 1, spec.width_px // 2]]
    assert img.pixels[tuple(lit[0])].tolist() == [1, 0.5, 0.25]


def test_nearer_point_wins():
    cloud = PointCloud([[0, 2.0, 3.0], [0, 1.0, 3.0], [0.0, 0.0, 1.0]], [0, 0, 0],
                       [[0, 0, 1], [1, 0, 0], [0, 1, 0]])
    img = render_view(cloud, CanvasSpec(4.0, 6.0), 0)
    row = 60 - 1 - 30
    # after centring the xy centroid (0, 1), depths are 1.0 and 0.0
    assert img.pixels[row, 20].tolist() == [1, 0, 0]


def test_zbuffer_matches_oracle():
    rng = np.random.default_rng(0)
    for az in AZIMUTHS + (33,):
        cloud = random_tree(rng, 1000)
        spec = CanvasSpec(5.0, 9.0)
        img = render_view(cloud, spec, az)
        np.testing.assert_array_equal(img.pixels, zbuffer_oracle(cloud, spec, az))
        assert (img.pixels.any(axis=2)).sum() <= len(cloud)
        assert img.pixels.min() >= 0 and img.pixels.max() <= 1


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(AZIMUTHS), st.sampled_from(AZIMUTHS))
def test_view_identity_for_right_angles(seed, a, b):
    cloud = random_tree(np.random.default_rng(seed), 200)
    spec = CanvasSpec(7.0, 9.0)
    left = render_view(rotate_z(cloud, a), spec, b).pixels
    right = render_view(cloud, spec, (a + b) % 360).pixels
    np.testing.assert_array_equal(left, right)


def test_render_empty_tree_raises():
    with pytest.raises(EmptyCloudError):
        render_view(PointCloud.empty(), CanvasSpec(1, 1), 0)


def test_downscale_examples():
    flat = ViewImage(np.full((10, 10, 3), 0.4), 0)
    np.testing.assert_allclose(downscale(flat, 0.2).pixels, 0.4)
    one = np.zeros((5, 5, 3))
    one[2, 3] = 1.0
    np.testing.assert_allclose(downscale(ViewImage(one, 0), 0.2).pixels, 0.04)
    same = downscale(ViewImage(one, 0), 1.0)
    np.testing.assert_array_equal(same.pixels, one)
    with pytest.raises(ValueError):
        downscale(flat, 0.3)


def test_downscale_partial_blocks_and_final_size():
    img = ViewImage(np.ones((7, 12, 3)), 90)
    small = downscale(img, 0.2)
    assert small.pixels.shape == (2, 3, 3)
    np.testing.assert_allclose(small.pixels, 1.0)
    fitted = downscale(img, 0.2, (4, 5))
    assert fitted.pixels.shape == (4, 5, 3)
    assert fitted.pixels.sum() == 2 * 3 * 3
    cropped = downscale(ViewImage(np.ones((20, 20, 3)), 0), 1.0, (3, 4))
    assert cropped.pixels.shape == (3, 4, 3)


def test_project_views_shape_and_symmetry():
    tree = generate_synthetic_tree(2, SyntheticSpec(), seed=1).tree
    spec = CanvasSpec.for_trees([tree])
    views = project_views(tree, spec)
    assert [v.azimuth for v in views] == list(AZIMUTHS)
    assert all(v.pixels.shape == (FINAL_HEIGHT, FINAL_WIDTH, 3) for v in views)


def test_cone_views_nearly_equal():
    rng = np.random.default_rng(4)
    n = 400_000  # dense enough that every silhouette pixel is hit
    h = rng.uniform(0, 10, n)
    r = (10 - h) * 0.3
    a = rng.uniform(0, 2 * np.pi, n)
    cone = PointCloud(np.column_stack([r * np.cos(a), r * np.sin(a), h]), np.zeros(n),
                      np.tile([0.6, 0.4, 0.3], (n, 1)))
    spec = CanvasSpec(8.0, 11.0, downscale=1.0, final_width=80, final_height=110)
    lit = [v.pixels.any(axis=2) for v in project_views(cone, spec)]
    for other in lit[1:]:
        assert (lit[0] != other).mean() <= 0.01


def test_front_and_rear_of_mirror_symmetric_tree_are_mirrors():
    rng = np.random.default_rng(9)
    half = np.column_stack([rng.uniform(0.05, 2, 300), rng.uniform(-1, 1, 300),
                            rng.uniform(0, 6, 300)])
    # mirror in x (about x = 0) with identical colors
    xyz = np.vstack([half, half * [-1, 1, 1]])
    colors = np.tile(rng.uniform(0.2, 1, (300, 3)), (2, 1))
    cloud = PointCloud(xyz, np.zeros(600), colors)
    spec = CanvasSpec(5.0, 7.0)
    front = render_view(cloud, spec, 0).pixels.any(axis=2)
    rear = render_view(cloud, spec, 180).pixels.any(axis=2)
    np.testing.assert_array_equal(front, rear[:, ::-1])


def test_canvas_for_trees_and_validation():
    cloud = PointCloud([[0, 0, 0], [2, 0, 10.0]])
    spec = CanvasSpec.for_trees([cloud])
    assert spec.world_width == pytest.approx(3.0) and spec.world_height == pytest.approx(11.0)
    for bad in [dict(px_per_m=0), dict(downscale=0), dict(downscale=1.5), dict(final_width=0)]:
        with pytest.raises(ValueError):
            CanvasSpec(1, 1, **bad)


def test_ppm_pixels_round_half_up():
    img = ViewImage(np.array([[[0.5 / 255, 1.0, 0.0]]]), 0)
    assert to_ppm_pixels(img).tolist() == [[[1, 255, 0]]]


def test_sidecar_and_transformer():
    assert image_sidecar_csv([("a.ppm", 3, 90, None)]) == "file,tree_id,azimuth,label\na.ppm,3,90,\n"
    trees = [generate_synthetic_tree(1, SyntheticSpec(), seed=s).tree for s in range(2)]
    out = TreeProjector().fit(trees).transform(trees)
    assert out.shape == (8, FINAL_HEIGHT, FINAL_WIDTH, 3)
