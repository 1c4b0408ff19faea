import numpy as np
import pytest

from treedecay.cloud import NORMALIZED, GeoRaster, PointCloud
from treedecay.errors import StageError
from treedecay.fusion import (colorize, normalize_channels, pixel_index, pixel_to_world,
                              world_to_pixel)


def test_world_to_pixel_examples():
    t = (1, 0, 0, -1, 0.5, -0.5)
    assert world_to_pixel(t, 0.5, -0.5) == (0.0, 0.0)
    assert world_to_pixel(t, 2.5, -3.5) == (2.0, 3.0)


def test_rotated_transform_round_trips():
    t = (0.8, 0.3, -0.25, -0.7, 1000.0, 2000.0)
    rng = np.random.default_rng(1)
    col, row = rng.uniform(-50, 50, 20), rng.uniform(-50, 50, 20)
    c2, r2 = world_to_pixel(t, *pixel_to_world(t, col, row))
    np.testing.assert_allclose(c2, col, atol=1e-9)
    np.testing.assert_allclose(r2, row, atol=1e-9)


def test_singular_transform_raises():
    with pytest.raises(ValueError):
        world_to_pixel((1, 1, 1, 1, 0, 0), 0, 0)


def test_pixel_index_is_containing_pixel():
    t = (1, 0, 0, -1, 0.5, -0.5)  # pixel (0, 0) covers x in [0, 1), y in (-1, 0]
    col, row = pixel_index(t, np.array([0.01, 0.99, 1.01]), np.array([-0.01, -0.99, -1.01]))
    np.testing.assert_array_equal(col, [0, 0, 1])
    np.testing.assert_array_equal(row, [0, 0, 1])


def _raster():
    planes = np.zeros((3, 4, 5), dtype=np.uint8)
    planes[:, 2, 3] = (200, 50, 25)
    return GeoRaster(planes, (1, 0, 0, -1, 0.5, -0.5))


def test_colorize_center_of_pixel_and_shared_pixels():
    raster = _raster()
    x, y = pixel_to_world(raster.transform, 3, 2)
    cloud = PointCloud([[x, y, 7.0], [x + 0.2, y - 0.3, 1.0]], [5.0, 6.0])
    colored, outside = colorize(cloud, raster)
    np.testing.assert_array_equal(colored.channels, [[200, 50, 25], [200, 50, 25]])
    assert outside.sum() == 0
    # geometry and intensity untouched
    np.testing.assert_array_equal(colored.xyz, cloud.xyz)
    np.testing.assert_array_equal(colored.intensity, cloud.intensity)
    again, _ = colorize(colored, raster)
    assert again.equals(colored)


def test_colorize_flags_points_outside():
    raster = _raster()
    cloud = PointCloud([[3.5, -2.5, 0], [-1.0, 0.5, 0]])
    colored, outside = colorize(cloud, raster)
    np.testing.assert_array_equal(outside, [False, True])
    np.testing.assert_array_equal(colored.channels[1], [0, 0, 0])


def test_colorize_all_outside_is_fatal():
    with pytest.raises(StageError, match="fusion"):
        colorize(PointCloud([[100.0, 100.0, 0.0]]), _raster())


def test_normalize_channels_examples():
    cloud = PointCloud(np.zeros((3, 3)), [10, 20, 30], [[5, 1, 0], [5, 2, 0], [5, 3, 9]])
    out = normalize_channels(cloud)
    np.testing.assert_allclose(out.intensity, [0, 0.5, 1])
    np.testing.assert_array_equal(out.channels[:, 0], [0, 0, 0])
    assert out.channel_state == NORMALIZED
    assert normalize_channels(out).equals(out)
    assert out.channels.min() >= 0 and out.channels.max() <= 1
    np.testing.assert_array_equal(np.argmax(out.channels[:, 1]), np.argmax(cloud.channels[:, 1]))
