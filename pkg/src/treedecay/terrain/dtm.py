"""Gridded terrain model and height normalization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from ..cloud import PointCloud
from ..errors import EmptyCloudError, FormatError, StageError

NODATA = -9999.0


@dataclass(frozen=True, eq=False)
class Dtm:
    """Ground elevations on a regular grid.

    ``grid[row, col]`` covers ``x in [ox + col*cell, ox + (col+1)*cell)`` and
    ``y in [oy + row*cell, oy + (row+1)*cell)``; rows grow with y.
    """

    origin: tuple
    cell: float
    grid: np.ndarray
    nodata: float = NODATA

    def __post_init__(self):
        if self.cell <= 0:
            raise ValueError("cell must be positive")
        grid = np.array(self.grid, dtype=np.float64)
        if grid.ndim != 2 or grid.size == 0:
            raise ValueError("grid must be a nonempty 2D array")
        grid.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @property
    def shape(self):
        return self.grid.shape

    def elevation(self, x, y):
        """Bilinear interpolation between cell centers, clamped at the edges."""
        ny, nx = self.grid.shape
        fx = (np.asarray(x, dtype=np.float64) - self.origin[0]) / self.cell - 0.5
        fy = (np.asarray(y, dtype=np.float64) - self.origin[1]) / self.cell - 0.5
        fx = np.clip(fx, 0, nx - 1)
        fy = np.clip(fy, 0, ny - 1)
        x0 = np.minimum(np.floor(fx).astype(np.int64), max(nx - 2, 0))
        y0 = np.minimum(np.floor(fy).astype(np.int64), max(ny - 2, 0))
        x1 = np.minimum(x0 + 1, nx - 1)
        y1 = np.minimum(y0 + 1, ny - 1)
        tx = fx - x0
        ty = fy - y0
        g = self.grid
        top = g[y0, x0] * (1 - tx) + g[y0, x1] * tx
        bottom = g[y1, x0] * (1 - tx) + g[y1, x1] * tx
        return top * (1 - ty) + bottom * ty


def build_dtm(cloud: PointCloud, mask, cell: float = 1.0) -> Dtm:
    """Mean ground elevation per cell; empty cells take their nearest filled cell.

    Nearest is measured between cell indices; ties go to the lowest row-major
    index.  The grid spans the xy bounds of the ground points.
    """
    mask = np.asarray(mask, dtype=bool)
    if len(mask) != len(cloud):
        raise ValueError("mask length must match the cloud")
    if cell <= 0:
        raise ValueError("cell must be positive")
    ground = cloud.xyz[mask]
    if not len(ground):
        raise StageError("terrain", "no ground points to build a DTM from")
    origin = ground[:, :2].min(axis=0)
    idx = np.floor((ground[:, :2] - origin) / cell).astype(np.int64)
    nx, ny = idx[:, 0].max() + 1, idx[:, 1].max() + 1
    flat = idx[:, 1] * nx + idx[:, 0]
    sums = np.bincount(flat, weights=ground[:, 2], minlength=nx * ny)
    counts = np.bincount(flat, minlength=nx * ny)
    filled = counts > 0
    values = np.full(nx * ny, NODATA)
    values[filled] = sums[filled] / counts[filled]

    empty = np.flatnonzero(~filled)
    if len(empty):
        full = np.flatnonzero(filled)
        full_rc = np.column_stack([full // nx, full % nx])
        empty_rc = np.column_stack([empty // nx, empty % nx])
        tree = cKDTree(full_rc)
        dist, _ = tree.query(empty_rc)
        for k, (e, d) in enumerate(zip(empty_rc, dist)):
            near = tree.query_ball_point(e, d + 1e-9)
            d2 = ((full_rc[near] - e) ** 2).sum(axis=1)
            best = np.asarray(near)[d2 == d2.min()]
            values[empty[k]] = values[full[best.min()]]
    return Dtm(tuple(origin), float(cell), values.reshape(ny, nx))


def normalize_heights(cloud: PointCloud, dtm: Dtm) -> PointCloud:
    """Height above ground: ``max(z - dtm(x, y), 0)``; other fields untouched."""
    if len(cloud) == 0:
        raise EmptyCloudError("cannot normalize an empty cloud")
    surface = dtm.elevation(cloud.x, cloud.y)
    xyz = cloud.xyz.copy()
    xyz[:, 2] = np.maximum(cloud.z - surface, 0.0)
    return cloud.replace(xyz=xyz)


def write_dtm_text(dtm: Dtm) -> str:
    ny, nx = dtm.shape
    lines = [f"origin {dtm.origin[0]!r} {dtm.origin[1]!r}", f"cell {dtm.cell!r}",
             f"dims {nx} {ny}", f"nodata {dtm.nodata!r}"]
    lines += [" ".join(repr(float(v)) for v in row) for row in dtm.grid]
    return "\n".join(lines) + "\n"


def read_dtm_text(text: str) -> Dtm:
    lines = text.splitlines()
    try:
        head = {ln.split()[0]: ln.split()[1:] for ln in lines[:4]}
        ox, oy = map(float, head["origin"])
        cell = float(head["cell"][0])
        nx, ny = map(int, head["dims"])
        nodata = float(head["nodata"][0])
        grid = np.array([[float(v) for v in ln.split()] for ln in lines[4:4 + ny]])
    except (KeyError, ValueError, IndexError) as exc:
        raise FormatError(f"malformed DTM text: {exc}") from None
    if grid.shape != (ny, nx):
        raise FormatError(f"DTM grid is {grid.shape}, header says {(ny, nx)}")
    return Dtm((ox, oy), cell, grid, nodata)
