"""Incremental Bowyer-Watson Delaunay triangulation.

Hull edges are closed off with *ghost* triangles ``(u, v, GHOST)`` whose apex
is a vertex at infinity, so no finite super-triangle is needed and points
outside the current hull are inserted exactly like interior ones.  Both
predicates run a floating-point filter first and fall back to exact rational
arithmetic when the sign is uncertain.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

GHOST = -1

# Shewchuk's static error bounds for the float filters
_EPS = 2.0 ** -53
_CCW_BOUND = (3.0 + 16.0 * _EPS) * _EPS
_ICC_BOUND = (10.0 + 96.0 * _EPS) * _EPS


def orient2d(ax, ay, bx, by, cx, cy):
    """Positive if a, b, c turn counterclockwise, negative if clockwise, 0 if collinear."""
    left = (ax - cx) * (by - cy)
    right = (ay - cy) * (bx - cx)
    det = left - right
    bound = _CCW_BOUND * (abs(left) + abs(right))
    if det > bound or -det > bound:
        return det
    ax, ay, bx, by, cx, cy = map(Fraction, (ax, ay, bx, by, cx, cy))
    return float((ax - cx) * (by - cy) - (ay - cy) * (bx - cx))


def incircle(ax, ay, bx, by, cx, cy, dx, dy):
    """Positive if d lies strictly inside the circle through counterclockwise a, b, c."""
    adx, ady = ax - dx, ay - dy
    bdx, bdy = bx - dx, by - dy
    cdx, cdy = cx - dx, cy - dy
    bc = bdx * cdy - cdx * bdy
    ca = cdx * ady - adx * cdy
    ab = adx * bdy - bdx * ady
    alift = adx * adx + ady * ady
    blift = bdx * bdx + bdy * bdy
    clift = cdx * cdx + cdy * cdy
    det = alift * bc + blift * ca + clift * ab
    permanent = ((abs(bdx * cdy) + abs(cdx * bdy)) * alift
                 + (abs(cdx * ady) + abs(adx * cdy)) * blift
                 + (abs(adx * bdy) + abs(bdx * ady)) * clift)
    bound = _ICC_BOUND * permanent
    if det > bound or -det > bound:
        return det
    ax, ay, bx, by, cx, cy, dx, dy = map(Fraction, (ax, ay, bx, by, cx, cy, dx, dy))
    adx, ady = ax - dx, ay - dy
    bdx, bdy = bx - dx, by - dy
    cdx, cdy = cx - dx, cy - dy
    exact = ((adx * adx + ady * ady) * (bdx * cdy - cdx * bdy)
             + (bdx * bdx + bdy * bdy) * (cdx * ady - adx * cdy)
             + (cdx * cdx + cdy * cdy) * (adx * bdy - bdx * ady))
    return float(exact)


class Triangulation:
    """Delaunay triangulation that grows one vertex at a time.

    Triangles are stored as vertex triples in counterclockwise order with a
    parallel list of neighbor triples; neighbor ``i`` lies across the edge
    opposite vertex ``i``.

    Attributes:
        xs, ys, zs: vertex coordinates (``zs`` is optional elevation).
    """

    def __init__(self):
        self.xs: list[float] = []
        self.ys: list[float] = []
        self.zs: list[float] = []
        self._tv: list[list[int]] = []
        self._tn: list[list[int]] = []
        self._alive: list[bool] = []
        self._free: list[int] = []
        self._pending: list[int] = []  # vertices waiting for a non-degenerate start
        self._last = -1
        self.duplicate_of: dict[int, int] = {}

    # -- public API ---------------------------------------------------------

    @classmethod
    def build(cls, points, z=None) -> Triangulation:
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError("points must be an (n, 2) array")
        if len(pts) < 3:
            raise ValueError(f"need at least 3 points, got {len(pts)}")
        tin = cls()
        zs = np.zeros(len(pts)) if z is None else np.asarray(z, dtype=np.float64)
        for (x, y), h in zip(pts.tolist(), zs.tolist()):
            tin.insert(x, y, h)
        if tin._last < 0:
            raise ValueError("all points are collinear")
        return tin

    @property
    def n_vertices(self):
        return len(self.xs)

    @property
    def ready(self):
        """True once a first non-degenerate triangle exists."""
        return self._last >= 0

    def insert(self, x, y, z=0.0) -> int:
        """Add a vertex; returns its index (or the index of an equal vertex)."""
        x, y = float(x), float(y)
        vid = len(self.xs)
        self.xs.append(x)
        self.ys.append(y)
        self.zs.append(float(z))
        if self._last < 0:
            self._start(vid)
            return self.duplicate_of.get(vid, vid)
        t = self._walk(x, y)
        if not self._is_ghost(t):
            for v in self._tv[t]:
                if self.xs[v] == x and self.ys[v] == y:
                    self.duplicate_of[vid] = v
                    return v
        self._insert_into(vid, t)
        return vid

    def triangles(self) -> np.ndarray:
        """(t, 3) counterclockwise vertex indices of the finite triangles."""
        tris = [v for v, ok in zip(self._tv, self._alive) if ok and GHOST not in v]
        return np.array(tris, dtype=np.int64).reshape(-1, 3)

    def neighbors(self) -> np.ndarray:
        """(t, 3) neighbor rows aligned with :meth:`triangles`; -1 across hull edges."""
        ids = [i for i, (v, ok) in enumerate(zip(self._tv, self._alive)) if ok and GHOST not in v]
        pos = {t: k for k, t in enumerate(ids)}
        rows = [[pos.get(n, -1) for n in self._tn[t]] for t in ids]
        return np.array(rows, dtype=np.int64).reshape(-1, 3)

    def hull_edges(self) -> list[tuple[int, int]]:
        """Hull edges (u, v) with the interior on the left of u -> v."""
        return [(v[1], v[0]) for v, ok in zip(self._tv, self._alive) if ok and v[2] == GHOST]

    def hull_vertices(self) -> list[int]:
        return sorted({u for u, _ in self.hull_edges()})

    def vertex_indices(self) -> list[int]:
        """Vertices that belong to the triangulation (duplicates excluded)."""
        used = set()
        for v, ok in zip(self._tv, self._alive):
            if ok:
                used.update(v)
        used.discard(GHOST)
        return sorted(used)

    def points(self) -> np.ndarray:
        return np.column_stack([self.xs, self.ys])

    def locate(self, x, y) -> int:
        """Row in :meth:`triangles` of the triangle containing (x, y), -1 outside the hull."""
        if self._last < 0:
            return -1
        t = self._walk(float(x), float(y))
        if self._is_ghost(t):
            return -1
        ids = [i for i, (v, ok) in enumerate(zip(self._tv, self._alive)) if ok and GHOST not in v]
        return ids.index(t)

    # -- construction -------------------------------------------------------

    def _start(self, vid):
        """Collect vertices until three of them are not collinear."""
        x, y = self.xs[vid], self.ys[vid]
        for p in self._pending:
            if self.xs[p] == x and self.ys[p] == y:
                self.duplicate_of[vid] = p
                return
        self._pending.append(vid)
        if len(self._pending) < 3:
            return
        a, b = self._pending[0], self._pending[1]
        o = orient2d(self.xs[a], self.ys[a], self.xs[b], self.ys[b], x, y)
        if o == 0:
            return
        if o < 0:
            a, b = b, a
        rest = [p for p in self._pending if p not in (a, b, vid)]
        self._pending = []
        t0 = self._new([a, b, vid])
        ghosts = [self._new([q, p, GHOST]) for p, q in ((a, b), (b, vid), (vid, a))]
        self._link([t0] + ghosts)
        self._last = t0
        for p in rest:
            self._reinsert(p)

    def _reinsert(self, vid):
        x, y = self.xs[vid], self.ys[vid]
        t = self._walk(x, y)
        if not self._is_ghost(t):
            for v in self._tv[t]:
                if self.xs[v] == x and self.ys[v] == y:
                    self.duplicate_of[vid] = v
                    return
        self._insert_into(vid, t)

    def _new(self, verts):
        if self._free:
            t = self._free.pop()
            self._tv[t] = list(verts)
            self._tn[t] = [-1, -1, -1]
            self._alive[t] = True
        else:
            t = len(self._tv)
            self._tv.append(list(verts))
            self._tn.append([-1, -1, -1])
            self._alive.append(True)
        return t

    def _link(self, tris):
        edges = {}
        for t in tris:
            v = self._tv[t]
            for i in range(3):
                edges[(v[(i + 1) % 3], v[(i + 2) % 3])] = (t, i)
        for (a, b), (t, i) in edges.items():
            other = edges.get((b, a))
            if other is not None:
                self._tn[t][i] = other[0]

    def _is_ghost(self, t):
        return self._tv[t][2] == GHOST

    def _walk(self, x, y):
        """Visibility walk to a triangle containing (x, y) or a ghost that sees it."""
        xs, ys = self.xs, self.ys
        t = self._last
        if not self._alive[t] or self._is_ghost(t):
            t = next(i for i, (v, ok) in enumerate(zip(self._tv, self._alive))
                     if ok and GHOST not in v)
        start = 0
        while True:
            if self._is_ghost(t):
                return t
            v = self._tv[t]
            moved = False
            for k in range(3):
                i = (start + k) % 3
                a, b = v[(i + 1) % 3], v[(i + 2) % 3]
                if orient2d(xs[a], ys[a], xs[b], ys[b], x, y) < 0:
                    t = self._tn[t][i]
                    moved = True
                    break
            if not moved:
                return t
            start = (start + 1) % 3

    def _conflict(self, t, x, y):
        xs, ys = self.xs, self.ys
        a, b, c = self._tv[t]
        if c != GHOST:
            return incircle(xs[a], ys[a], xs[b], ys[b], xs[c], ys[c], x, y) > 0
        o = orient2d(xs[a], ys[a], xs[b], ys[b], x, y)
        if o > 0:
            return True
        if o < 0:
            return False
        # collinear with the hull edge: conflicts only strictly inside the segment
        ax, ay, bx, by = map(Fraction, (xs[a], ys[a], xs[b], ys[b]))
        px, py = Fraction(x), Fraction(y)
        return ((px - ax) * (bx - ax) + (py - ay) * (by - ay) > 0
                and (px - bx) * (ax - bx) + (py - by) * (ay - by) > 0)

    def _insert_into(self, vid, t0):
        x, y = self.xs[vid], self.ys[vid]
        cavity = {t0}
        stack = [t0]
        boundary = []
        while stack:
            t = stack.pop()
            for i, nb in enumerate(self._tn[t]):
                if nb in cavity:
                    continue
                if self._conflict(nb, x, y):
                    cavity.add(nb)
                    stack.append(nb)
                else:
                    boundary.append((t, i, nb))
        # a neighbour may have been recorded as boundary before joining the cavity
        boundary = [(t, i, nb) for t, i, nb in boundary if nb not in cavity]

        for t in cavity:
            self._alive[t] = False
            self._free.append(t)
        new = []
        outer = []
        for t, i, nb in boundary:
            v = self._tv[t]
            a, b = v[(i + 1) % 3], v[(i + 2) % 3]
            if a == GHOST:
                tri = [b, vid, GHOST]
            elif b == GHOST:
                tri = [vid, a, GHOST]
            else:
                tri = [a, b, vid]
            new.append(tri)
            outer.append((a, b, nb))
        # allocate after freeing so slots are reused
        ids = [self._new(tri) for tri in new]
        self._link(ids)
        for tid, (a, b, nb) in zip(ids, outer):
            v = self._tv[tid]
            for i in range(3):
                if (v[(i + 1) % 3], v[(i + 2) % 3]) == (a, b):
                    self._tn[tid][i] = nb
            nv = self._tv[nb]
            for i in range(3):
                if (nv[(i + 1) % 3], nv[(i + 2) % 3]) == (b, a):
                    self._tn[nb][i] = tid
        solid = [t for t in ids if not self._is_ghost(t)]
        self._last = solid[0] if solid else ids[0]


def delaunay_triangulate(points2d, z=None) -> Triangulation:
    """Delaunay triangulation of an (n, 2) point array (n >= 3, not all collinear)."""
    return Triangulation.build(points2d, z)
