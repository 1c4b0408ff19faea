"""Colorize ALS points from a georeferenced CIR raster and normalize channels."""

from __future__ import annotations

import numpy as np

from .cloud import NORMALIZED, RAW, GeoRaster, PointCloud
from .errors import EmptyCloudError, StageError


def world_to_pixel(transform, x, y):
    """Invert the pixel-center -> world affine map.

    Returns fractional ``(col, row)``; integer pixel centers map back to the
    world coordinates the transform assigns them.  Works on scalars or arrays.
    """
    a, d, b, e, c, f = transform
    det = a * e - b * d
    if det == 0:
        raise ValueError("singular world transform")
    dx = np.asarray(x, dtype=np.float64) - c
    dy = np.asarray(y, dtype=np.float64) - f
    col = (e * dx - b * dy) / det
    row = (a * dy - d * dx) / det
    if col.ndim == 0:
        return float(col), float(row)
    return col, row


def pixel_to_world(transform, col, row):
    a, d, b, e, c, f = transform
    col = np.asarray(col, dtype=np.float64)
    row = np.asarray(row, dtype=np.float64)
    x = a * col + b * row + c
    y = d * col + e * row + f
    if x.ndim == 0:
        return float(x), float(y)
    return x, y


def pixel_index(transform, x, y):
    """Integer (col, row) of the pixel whose footprint contains (x, y).

    Coordinates from :func:`world_to_pixel` are center-referenced, so the
    containing pixel is ``floor(coord + 0.5)``.
    """
    col, row = world_to_pixel(transform, x, y)
    return (np.floor(np.asarray(col) + 0.5).astype(np.int64),
            np.floor(np.asarray(row) + 0.5).astype(np.int64))


def colorize(cloud: PointCloud, raster: GeoRaster):
    """Assign each point the (nir, r, g) of the raster pixel it falls into.

    Returns ``(colored, outside)`` where ``outside`` is a boolean mask of
    points beyond the raster extent; those keep color (0, 0, 0).
    """
    if len(cloud) == 0:
        raise EmptyCloudError("cannot colorize an empty cloud")
    col, row = pixel_index(raster.transform, cloud.x, cloud.y)
    outside = (col < 0) | (row < 0) | (col >= raster.width) | (row >= raster.height)
    if outside.all():
        raise StageError("fusion", "no point falls inside the raster extent")
    channels = np.zeros((len(cloud), 3))
    inside = ~outside
    channels[inside] = raster.planes[:, row[inside], col[inside]].T
    return cloud.replace(channels=channels, channel_state=RAW), outside


def _minmax(values):
    lo, hi = values.min(), values.max()
    if hi == lo:
        return np.zeros_like(values)
    return (values - lo) / (hi - lo)


def normalize_channels(cloud: PointCloud) -> PointCloud:
    """Per-cloud min-max scaling of intensity, nir, r and g into [0, 1].

    A constant channel maps to 0.  Already-normalized clouds are returned as is.
    """
    if len(cloud) == 0:
        raise EmptyCloudError("cannot normalize an empty cloud")
    if cloud.channel_state == NORMALIZED:
        return cloud
    channels = np.column_stack([_minmax(cloud.channels[:, k]) for k in range(3)])
    return cloud.replace(intensity=_minmax(cloud.intensity), channels=channels,
                         channel_state=NORMALIZED)
