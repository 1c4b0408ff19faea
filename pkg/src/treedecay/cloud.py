"""Point-cloud and raster value types.

A :class:`PointCloud` stores seven channels per point (x, y, z, intensity,
nir, r, g) as column arrays.  Instances are immutable: every operation that
changes points returns a new cloud, so bounds are always recomputed from the
current points.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import EmptyCloudError

RAW = "raw"
NORMALIZED = "normalized"


class MultispectralPoint(NamedTuple):
    x: float
    y: float
    z: float
    intensity: float
    nir: float = 0.0
    r: float = 0.0
    g: float = 0.0


def _frozen(a, shape_tail, name):
    arr = np.array(a, dtype=np.float64, copy=True)
    if arr.size == 0:
        arr = arr.reshape((0,) + shape_tail)
    if arr.shape[1:] != shape_tail:
        raise ValueError(f"{name} must have shape (n,{','.join(map(str, shape_tail))}), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Immutable multispectral point cloud.

    Args:
        xyz: (n, 3) coordinates in meters.
        intensity: (n,) return intensity, nonnegative.
        channels: (n, 3) color channels in (nir, r, g) order.
        channel_state: ``"raw"`` (0-255 raster values) or ``"normalized"``.
    """

    xyz: np.ndarray
    intensity: np.ndarray = None
    channels: np.ndarray = None
    channel_state: str = RAW
    _bounds: tuple = field(default=None, init=False, repr=False)

    def __post_init__(self):
        xyz = _frozen(self.xyz, (3,), "xyz")
        n = len(xyz)
        intensity = np.zeros(n) if self.intensity is None else self.intensity
        channels = np.zeros((n, 3)) if self.channels is None else self.channels
        intensity = _frozen(np.reshape(intensity, (-1,)), (), "intensity")
        channels = _frozen(channels, (3,), "channels")
        if len(intensity) != n or len(channels) != n:
            raise ValueError("xyz, intensity and channels must have the same length")
        if self.channel_state not in (RAW, NORMALIZED):
            raise ValueError(f"unknown channel_state {self.channel_state!r}")
        object.__setattr__(self, "xyz", xyz)
        object.__setattr__(self, "intensity", intensity)
        object.__setattr__(self, "channels", channels)

    @classmethod
    def from_points(cls, points: Sequence[MultispectralPoint], channel_state=RAW):
        arr = np.asarray([tuple(p) for p in points], dtype=np.float64).reshape(-1, 7)
        return cls(arr[:, :3], arr[:, 3], arr[:, 4:], channel_state)

    @classmethod
    def empty(cls):
        return cls(np.empty((0, 3)))

    def __len__(self):
        return len(self.xyz)

    def __getitem__(self, i) -> MultispectralPoint:
        x, y, z = self.xyz[i]
        nir, r, g = self.channels[i]
        return MultispectralPoint(float(x), float(y), float(z), float(self.intensity[i]),
                                  float(nir), float(r), float(g))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @property
    def x(self):
        return self.xyz[:, 0]

    @property
    def y(self):
        return self.xyz[:, 1]

    @property
    def z(self):
        return self.xyz[:, 2]

    def as_array(self):
        """(n, 7) array in x, y, z, intensity, nir, r, g column order."""
        return np.column_stack([self.xyz, self.intensity, self.channels])

    @property
    def bounds(self):
        """Tight ``(mins, maxs)`` of the coordinates; empty clouds have none."""
        if len(self) == 0:
            raise EmptyCloudError("empty point cloud has no bounds")
        if self._bounds is None:
            object.__setattr__(self, "_bounds", (self.xyz.min(axis=0), self.xyz.max(axis=0)))
        return self._bounds

    def xy_centroid(self):
        if len(self) == 0:
            raise EmptyCloudError("empty point cloud has no centroid")
        return self.xyz[:, :2].mean(axis=0)

    def subset(self, index) -> PointCloud:
        """Points selected by a boolean mask or integer index array, order kept."""
        return PointCloud(self.xyz[index], self.intensity[index], self.channels[index],
                          self.channel_state)

    def replace(self, xyz=None, intensity=None, channels=None, channel_state=None) -> PointCloud:
        return PointCloud(
            self.xyz if xyz is None else xyz,
            self.intensity if intensity is None else intensity,
            self.channels if channels is None else channels,
            self.channel_state if channel_state is None else channel_state,
        )

    def append(self, other: PointCloud) -> PointCloud:
        if len(self) and len(other) and other.channel_state != self.channel_state:
            raise ValueError("cannot join clouds with different channel states")
        state = self.channel_state if len(self) else other.channel_state
        return PointCloud(np.vstack([self.xyz, other.xyz]),
                          np.concatenate([self.intensity, other.intensity]),
                          np.vstack([self.channels, other.channels]), state)

    def equals(self, other: PointCloud) -> bool:
        return (self.channel_state == other.channel_state
                and np.array_equal(self.as_array(), other.as_array()))


@dataclass(frozen=True, eq=False)
class GeoRaster:
    """Three-plane CIR raster with a world-file affine transform.

    ``planes`` is (3, height, width) uint8 in (nir, r, g) order.  ``transform``
    holds the six world-file coefficients ``(A, D, B, E, C, F)`` mapping the
    center of pixel (col, row) to ``x = A*col + B*row + C``,
    ``y = D*col + E*row + F``.
    """

    planes: np.ndarray
    transform: tuple

    def __post_init__(self):
        planes = np.array(self.planes, dtype=np.uint8, copy=True)
        if planes.ndim != 3 or planes.shape[0] != 3:
            raise ValueError(f"planes must be (3, height, width), got {planes.shape}")
        transform = tuple(float(v) for v in self.transform)
        if len(transform) != 6:
            raise ValueError("transform needs 6 coefficients")
        a, _, _, e, _, _ = transform
        if a == 0 or e == 0:
            raise ValueError("degenerate transform: A and E must be nonzero")
        planes.setflags(write=False)
        object.__setattr__(self, "planes", planes)
        object.__setattr__(self, "transform", transform)

    @property
    def width(self):
        return self.planes.shape[2]

    @property
    def height(self):
        return self.planes.shape[1]

    def pixel(self, col, row):
        return tuple(int(v) for v in self.planes[:, row, col])


DECAY_LEVELS = (1, 2, 3, 4, 5)
LEVEL_NAMES = {1: "live", 2: "declining", 3: "dead", 4: "loose bark", 5: "clean"}


def decay_level(value) -> int:
    """Validate a decay level label (integer in 1..5)."""
    level = int(value)
    if level != value or level not in DECAY_LEVELS:
        raise ValueError(f"decay level must be an integer in 1..5, got {value!r}")
    return level
