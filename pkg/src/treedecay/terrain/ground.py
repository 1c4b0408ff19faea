"""Progressive TIN densification ground filter."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..cloud import PointCloud
from ..errors import EmptyCloudError, StageError
from .delaunay import Triangulation


@dataclass(frozen=True)
class PtdParams:
    """Densification thresholds.

    Args:
        seed_cell: edge of the grid cells whose lowest point seeds the TIN (m).
        max_angle: largest angle between the facet plane and the lines from
            the facet vertices to a candidate (degrees).
        max_dist: largest vertical distance from a candidate to its facet (m).
        max_iterations: densification rounds before giving up on a fixpoint.
    """

    seed_cell: float = 5.0
    max_angle: float = 6.0
    max_dist: float = 1.4
    max_iterations: int = 50

    def __post_init__(self):
        if self.seed_cell <= 0 or self.max_dist <= 0 or self.max_iterations <= 0:
            raise ValueError("PTD parameters must be positive")
        if not 0 < self.max_angle < 90:
            raise ValueError("max_angle must lie in (0, 90) degrees")


def seed_points(xy, z, cell):
    """Index of the lowest point per occupied grid cell (ties -> lower index)."""
    cells = np.floor((xy - xy.min(axis=0)) / cell).astype(np.int64)
    order = np.lexsort((np.arange(len(z)), z, cells[:, 1], cells[:, 0]))
    key = cells[order]
    first = np.ones(len(order), dtype=bool)
    first[1:] = np.any(key[1:] != key[:-1], axis=1)
    return np.sort(order[first])


def find_triangles(tri_xy, queries, eps=1e-9):
    """Index of a triangle containing each query point, -1 when none does.

    Uses a uniform bucket grid over triangle bounding boxes so every query
    only tests the triangles overlapping its cell.

    Args:
        tri_xy: (t, 3, 2) counterclockwise triangle corners.
        queries: (m, 2) points.
    """
    t = len(tri_xy)
    m = len(queries)
    out = np.full(m, -1, dtype=np.int64)
    if t == 0 or m == 0:
        return out
    lo = tri_xy.min(axis=1)
    hi = tri_xy.max(axis=1)
    extent = hi - lo
    cell = max(float(np.sqrt(np.median(extent[:, 0] * extent[:, 1]))), 1e-6)
    origin = np.minimum(lo.min(axis=0), queries.min(axis=0))
    c0 = np.floor((lo - origin) / cell).astype(np.int64)
    c1 = np.floor((hi - origin) / cell).astype(np.int64)
    qc = np.floor((queries - origin) / cell).astype(np.int64)
    nx = int(max(c1[:, 0].max(), qc[:, 0].max())) + 1

    w = c1[:, 0] - c0[:, 0] + 1
    counts = w * (c1[:, 1] - c0[:, 1] + 1)
    tri_ids = np.repeat(np.arange(t), counts)
    local = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
    wr = np.repeat(w, counts)
    cx = np.repeat(c0[:, 0], counts) + local % wr
    cy = np.repeat(c0[:, 1], counts) + local // wr
    key = cy * nx + cx
    order = np.argsort(key, kind="stable")
    key, tri_ids = key[order], tri_ids[order]

    qkey = qc[:, 1] * nx + qc[:, 0]
    start = np.searchsorted(key, qkey, "left")
    stop = np.searchsorted(key, qkey, "right")
    n = stop - start
    q = np.repeat(np.arange(m), n)
    cand = tri_ids[np.repeat(start, n) + np.arange(n.sum()) - np.repeat(np.cumsum(n) - n, n)]

    p = queries[q]
    a, b, c = tri_xy[cand, 0], tri_xy[cand, 1], tri_xy[cand, 2]

    def cross(u, v, w_):
        return (v[:, 0] - u[:, 0]) * (w_[:, 1] - u[:, 1]) - (v[:, 1] - u[:, 1]) * (w_[:, 0] - u[:, 0])

    scale = np.maximum(np.abs(cross(a, b, c)), 1e-300)
    tol = -eps * scale
    inside = (cross(a, b, p) >= tol) & (cross(b, c, p) >= tol) & (cross(c, a, p) >= tol)
    hit_q, hit_t = q[inside], cand[inside]
    # first hit per query in candidate order
    keep = np.ones(len(hit_q), dtype=bool)
    keep[1:] = hit_q[1:] != hit_q[:-1]
    out[hit_q[keep]] = hit_t[keep]
    return out


def _facet_tests(tri3d, pts):
    """Vertical distance to the facet plane and the largest vertex angle (degrees)."""
    v0, v1, v2 = tri3d[:, 0], tri3d[:, 1], tri3d[:, 2]
    normal = np.cross(v1 - v0, v2 - v0)
    nz = normal[:, 2]
    rel = pts - v0
    plane_z = v0[:, 2] - (normal[:, 0] * rel[:, 0] + normal[:, 1] * rel[:, 1]) / nz
    vdist = np.abs(pts[:, 2] - plane_z)
    perp = np.abs(np.einsum("ij,ij->i", normal, rel)) / np.linalg.norm(normal, axis=1)
    angle = np.zeros(len(pts))
    for v in (v0, v1, v2):
        length = np.linalg.norm(pts - v, axis=1)
        ratio = np.divide(perp, length, out=np.zeros_like(perp), where=length > 0)
        angle = np.maximum(angle, np.degrees(np.arcsin(np.clip(ratio, 0.0, 1.0))))
    return vdist, angle


def filter_ground(cloud: PointCloud, params: PtdParams = PtdParams()) -> np.ndarray:
    """Boolean ground mask by progressive TIN densification.

    The TIN starts from the lowest point of every ``seed_cell`` grid cell plus
    four virtual corners just outside the cloud's footprint (carrying the
    elevation of their nearest seed) so that every point lies under a facet.
    Each round tests all non-ground points against the current TIN and then
    inserts every accepted point; acceptance within a round does not depend
    on evaluation order.
    """
    n = len(cloud)
    if n == 0:
        raise EmptyCloudError("cannot filter an empty cloud")
    xy = cloud.xyz[:, :2]
    z = cloud.xyz[:, 2]
    seeds = seed_points(xy, z, params.seed_cell)
    if len(seeds) < 3:
        raise StageError("terrain", f"only {len(seeds)} seed cells occupied, need 3")

    ground = np.zeros(n, dtype=bool)
    ground[seeds] = True
    tin = Triangulation()
    lo, hi = xy.min(axis=0), xy.max(axis=0)
    margin = params.seed_cell / 2
    corners = np.array([[lo[0] - margin, lo[1] - margin], [hi[0] + margin, lo[1] - margin],
                        [hi[0] + margin, hi[1] + margin], [lo[0] - margin, hi[1] + margin]])
    for cx, cy in corners.tolist():
        d2 = (xy[seeds, 0] - cx) ** 2 + (xy[seeds, 1] - cy) ** 2
        tin.insert(cx, cy, z[seeds[int(np.argmin(d2))]])
    for i in seeds.tolist():
        tin.insert(xy[i, 0], xy[i, 1], z[i])

    for _ in range(params.max_iterations):
        cand = np.flatnonzero(~ground)
        if not len(cand):
            break
        tris = tin.triangles()
        verts = np.column_stack([tin.xs, tin.ys, tin.zs])
        tri3d = verts[tris]
        hit = find_triangles(tri3d[:, :, :2], xy[cand])
        ok = hit >= 0
        cand, hit = cand[ok], hit[ok]
        vdist, angle = _facet_tests(tri3d[hit], cloud.xyz[cand])
        accept = cand[(vdist <= params.max_dist) & (angle <= params.max_angle)]
        if not len(accept):
            break
        ground[accept] = True
        for i in accept.tolist():
            tin.insert(xy[i, 0], xy[i, 1], z[i])
    return ground
