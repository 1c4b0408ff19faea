"""Four-view orthographic rendering of individual trees."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .cloud import PointCloud
from .errors import EmptyCloudError
from .segmentation import TreeSegment

AZIMUTHS = (0, 90, 180, 270)
FINAL_HEIGHT = 129
FINAL_WIDTH = 132


@dataclass(frozen=True)
class CanvasSpec:
    """World extent of the render canvas and the resampling to the final size.

    Args:
        world_width: horizontal extent in meters, centered on the tree.
        world_height: vertical extent in meters starting at ground level.
        px_per_m: render resolution.
        downscale: block-averaging factor; ``1/downscale`` must be an integer.
        final_width, final_height: output size after center pad/crop.
    """

    world_width: float
    world_height: float
    px_per_m: float = 10.0
    downscale: float = 0.2
    final_width: int = FINAL_WIDTH
    final_height: int = FINAL_HEIGHT

    def __post_init__(self):
        if self.world_width <= 0 or self.world_height <= 0:
            raise ValueError("canvas extent must be positive")
        if self.px_per_m <= 0:
            raise ValueError("px_per_m must be positive")
        if not 0 < self.downscale <= 1:
            raise ValueError("downscale must lie in (0, 1]")
        if self.final_width <= 0 or self.final_height <= 0:
            raise ValueError("final dimensions must be positive")

    @property
    def width_px(self) -> int:
        return max(1, int(round(self.world_width * self.px_per_m)))

    @property
    def height_px(self) -> int:
        return max(1, int(round(self.world_height * self.px_per_m)))

    @classmethod
    def for_trees(cls, clouds, margin=1.0, **kwargs) -> CanvasSpec:
        """Canvas fitting every tree at every azimuth, plus ``margin`` meters."""
        width = height = 0.0
        for cloud in clouds:
            if isinstance(cloud, TreeSegment):
                cloud = cloud.points
            if not len(cloud):
                continue
            offsets = cloud.xyz[:, :2] - cloud.xy_centroid()
            width = max(width, 2.0 * float(np.sqrt((offsets ** 2).sum(axis=1)).max()))
            height = max(height, float(cloud.z.max()))
        return cls(width + margin, height + margin, **kwargs)


@dataclass(frozen=True, eq=False)
class ViewImage:
    """Rendered side view; ``pixels`` is (height, width, 3) in [0, 1]."""

    pixels: np.ndarray
    azimuth: float
    depth: np.ndarray = None

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


def _exact_cos_sin(azimuth):
    a = float(azimuth) % 360.0
    quarter = {0.0: (1.0, 0.0), 90.0: (0.0, 1.0), 180.0: (-1.0, 0.0), 270.0: (0.0, -1.0)}
    if a in quarter:
        return quarter[a]
    rad = math.radians(a)
    return math.cos(rad), math.sin(rad)


def rotate_z(cloud: PointCloud, azimuth: float, center=None) -> PointCloud:
    """Rotate x, y counterclockwise by ``azimuth`` degrees about the xy centroid."""
    if len(cloud) == 0:
        return cloud
    c, s = _exact_cos_sin(azimuth)
    if c == 1.0 and s == 0.0:
        return cloud
    cx, cy = cloud.xy_centroid() if center is None else center
    dx = cloud.x - cx
    dy = cloud.y - cy
    xyz = cloud.xyz.copy()
    xyz[:, 0] = cx + c * dx - s * dy
    xyz[:, 1] = cy + s * dx + c * dy
    return cloud.replace(xyz=xyz)


def _points_of(tree):
    return tree.points if isinstance(tree, TreeSegment) else tree


def render_view(tree, spec: CanvasSpec, azimuth: float) -> ViewImage:
    """Orthographic side view with a nearest-depth z-buffer.

    After rotating by ``azimuth`` the tree is projected onto the xz plane with
    ``u = x - centroid_x`` and ``v = z``; the viewer looks along +y, so the
    point with the smallest rotated y wins a pixel (earlier points win ties).
    Points outside the canvas are dropped.
    """
    cloud = _points_of(tree)
    if len(cloud) == 0:
        raise EmptyCloudError("cannot render an empty tree")
    rotated = rotate_z(cloud, azimuth)
    w, h = spec.width_px, spec.height_px
    u = rotated.x - rotated.xy_centroid()[0]
    col = np.floor((u + spec.world_width / 2) * spec.px_per_m).astype(np.int64)
    row = h - 1 - np.floor(rotated.z * spec.px_per_m).astype(np.int64)
    depth = rotated.y
    inside = (col >= 0) & (col < w) & (row >= 0) & (row < h)
    idx = np.flatnonzero(inside)
    flat = row[idx] * w + col[idx]
    order = np.lexsort((idx, depth[idx], flat))
    flat_sorted = flat[order]
    first = np.ones(len(order), dtype=bool)
    first[1:] = flat_sorted[1:] != flat_sorted[:-1]
    winners = idx[order[first]]
    pixels = np.zeros((h * w, 3))
    zbuf = np.full(h * w, np.inf)
    pixels[flat_sorted[first]] = np.clip(cloud.channels[winners], 0.0, 1.0)
    zbuf[flat_sorted[first]] = depth[winners]
    return ViewImage(pixels.reshape(h, w, 3), float(azimuth), zbuf.reshape(h, w))


def _block_mean(pixels, k):
    h, w, c = pixels.shape
    oh, ow = -(-h // k), -(-w // k)
    padded = np.zeros((oh * k, ow * k, c))
    padded[:h, :w] = pixels
    ones = np.zeros((oh * k, ow * k))
    ones[:h, :w] = 1.0
    sums = padded.reshape(oh, k, ow, k, c).sum(axis=(1, 3))
    counts = ones.reshape(oh, k, ow, k).sum(axis=(1, 3))
    return sums / counts[:, :, None]


def _fit(pixels, height, width):
    """Center-pad with zeros or center-crop to ``(height, width)``."""
    out = np.zeros((height, width, pixels.shape[2]))
    h, w = pixels.shape[:2]
    sh, dh = max(0, (h - height) // 2), max(0, (height - h) // 2)
    sw, dw = max(0, (w - width) // 2), max(0, (width - w) // 2)
    ch, cw = min(h, height), min(w, width)
    out[dh:dh + ch, dw:dw + cw] = pixels[sh:sh + ch, sw:sw + cw]
    return out


def downscale(image: ViewImage, factor: float, final_size=None) -> ViewImage:
    """Average k x k blocks (k = 1/factor); partial edge blocks average what they hold.

    ``final_size`` is ``(height, width)``; when given, the result is center
    padded or cropped to it.
    """
    k = 1.0 / factor
    if factor <= 0 or abs(k - round(k)) > 1e-9:
        raise ValueError(f"1/factor must be a positive integer, got factor {factor}")
    k = int(round(k))
    pixels = image.pixels if k == 1 else _block_mean(image.pixels, k)
    if final_size is not None:
        pixels = _fit(pixels, *final_size)
    return ViewImage(pixels, image.azimuth)


def project_views(tree, spec: CanvasSpec) -> list[ViewImage]:
    """Render and downscale the four side views (0, 90, 180, 270 degrees)."""
    size = (spec.final_height, spec.final_width)
    return [downscale(render_view(tree, spec, az), spec.downscale, size) for az in AZIMUTHS]


def to_ppm_pixels(image: ViewImage) -> np.ndarray:
    """uint8 pixels, values scaled by 255 and rounded half up."""
    return np.floor(np.clip(image.pixels, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def image_sidecar_csv(rows) -> str:
    """``rows`` of (file name, tree id, azimuth, label)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["file", "tree_id", "azimuth", "label"])
    for name, tree_id, az, label in rows:
        w.writerow([name, tree_id, int(az), "" if label is None else label])
    return buf.getvalue()


class TreeProjector(BaseEstimator, TransformerMixin):
    """Turn tree clouds into stacked four-view images.

    ``fit`` sizes the canvas from the training trees unless explicit world
    dimensions are given; ``transform`` returns an array of shape
    (n_trees * 4, final_height, final_width, 3) in azimuth-major order per
    tree.
    """

    def __init__(self, world_width=None, world_height=None, px_per_m=10.0, downscale=0.2,
                 final_width=FINAL_WIDTH, final_height=FINAL_HEIGHT, margin=1.0):
        self.world_width = world_width
        self.world_height = world_height
        self.px_per_m = px_per_m
        self.downscale = downscale
        self.final_width = final_width
        self.final_height = final_height
        self.margin = margin

    def fit(self, X, y=None):
        opts = dict(px_per_m=self.px_per_m, downscale=self.downscale,
                    final_width=self.final_width, final_height=self.final_height)
        if self.world_width is not None and self.world_height is not None:
            self.canvas_ = CanvasSpec(self.world_width, self.world_height, **opts)
        else:
            self.canvas_ = CanvasSpec.for_trees(X, margin=self.margin, **opts)
        return self

    def transform(self, X):
        check_is_fitted(self, "canvas_")
        out = [v.pixels for tree in X for v in project_views(tree, self.canvas_)]
        if not out:
            return np.zeros((0, self.final_height, self.final_width, 3))
        return np.stack(out)
