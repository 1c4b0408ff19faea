"""Top-down individual tree segmentation of a height-normalized cloud."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .cloud import PointCloud
from .errors import EmptyCloudError


@dataclass(frozen=True)
class SegParams:
    """Segmentation settings.

    Args:
        threshold: 2D distance below which a point joins the growing tree (m).
        min_height: lowest apex height that may seed or keep a tree (m).
        min_points: smallest point count of a kept segment.
    """

    threshold: float = 0.5
    min_height: float = 2.0
    min_points: int = 16

    def __post_init__(self):
        if self.threshold <= 0 or self.min_height <= 0 or self.min_points <= 0:
            raise ValueError("segmentation parameters must be positive")


@dataclass(frozen=True, eq=False)
class TreeSegment:
    points: PointCloud
    id: int
    indices: np.ndarray = None  # rows of the source cloud, when known

    def __post_init__(self):
        if len(self.points) == 0:
            raise EmptyCloudError("a tree segment needs at least one point")

    def __len__(self):
        return len(self.points)

    @property
    def apex_index(self) -> int:
        return int(np.argmax(self.points.z))

    @property
    def apex(self):
        return self.points[self.apex_index]

    @property
    def stem_xy(self):
        p = self.apex
        return p.x, p.y

    @property
    def height(self) -> float:
        return float(self.points.z.max())


def _pairs_within(tree, xy, sources, radius):
    """(source, target, distance) for every target within ``radius`` of a source."""
    hits = tree.query_ball_point(xy[sources], r=radius, return_sorted=False)
    lengths = np.fromiter((len(h) for h in hits), dtype=np.int64, count=len(hits))
    if lengths.sum() == 0:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty, np.empty(0)
    targets = np.concatenate([np.asarray(h, dtype=np.int64) for h in hits])
    src = np.repeat(sources, lengths)
    dist = np.hypot(*(xy[src] - xy[targets]).T)
    return src, targets, dist


def segment_trees(cloud: PointCloud, params: SegParams = SegParams()) -> list[TreeSegment]:
    """Grow trees one at a time from the highest unassigned point.

    A point joins the current tree when its smallest 2D distance to the
    tree's points is below ``threshold`` and not larger than its smallest
    distance to any earlier tree.  Distances only shrink as the tree grows,
    so the grown set does not depend on the order candidates are visited;
    it is computed here as a breadth-first closure.  Points never reached
    stay unassigned.
    """
    n = len(cloud)
    if n == 0:
        raise EmptyCloudError("cannot segment an empty cloud")
    z = cloud.z
    if (z < 0).any():
        raise ValueError("heights must be normalized (z >= 0)")
    xy = np.ascontiguousarray(cloud.xyz[:, :2])
    kd = cKDTree(xy)
    thr = params.threshold
    order = np.lexsort((np.arange(n), -z))
    label = np.full(n, -1, dtype=np.int64)
    d_other = np.full(n, np.inf)
    d_cur = np.full(n, np.inf)
    segments = []
    pos = 0
    while True:
        while pos < n and label[order[pos]] >= 0:
            pos += 1
        if pos == n or z[order[pos]] < params.min_height:
            break
        seed = order[pos]
        tid = len(segments)
        label[seed] = tid
        members = [np.array([seed])]
        touched = []
        frontier = np.array([seed])
        while len(frontier):
            _, tgt, dist = _pairs_within(kd, xy, frontier, thr)
            free = label[tgt] < 0
            tgt, dist = tgt[free], dist[free]
            np.minimum.at(d_cur, tgt, dist)
            touched.append(tgt)
            cand = np.unique(tgt)
            join = cand[(d_cur[cand] < thr) & (d_cur[cand] <= d_other[cand])]
            label[join] = tid
            members.append(join)
            frontier = join
        for t in touched:
            d_cur[t] = np.inf
        idx = np.sort(np.concatenate(members))
        _, tgt, dist = _pairs_within(kd, xy, idx, thr)
        free = label[tgt] < 0
        np.minimum.at(d_other, tgt[free], dist[free])
        segments.append(TreeSegment(cloud.subset(idx), tid, idx))
    return segments


def residual_mask(n_points, segments) -> np.ndarray:
    """True for points that belong to no segment."""
    mask = np.ones(n_points, dtype=bool)
    for seg in segments:
        mask[seg.indices] = False
    return mask


def filter_segments(segments, params: SegParams = SegParams()):
    """Split into ``(kept, rejected)`` by point count and apex height."""
    kept, rejected = [], []
    for seg in segments:
        ok = len(seg) >= params.min_points and seg.height >= params.min_height
        (kept if ok else rejected).append(seg)
    return kept, rejected


def crop_cylinder(cloud: PointCloud, center_xy, radius: float) -> PointCloud:
    """Points within a closed disk of ``radius`` around ``center_xy`` (2D)."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    d2 = (cloud.x - center_xy[0]) ** 2 + (cloud.y - center_xy[1]) ** 2
    return cloud.subset(d2 <= radius * radius)


def segment_manifest_csv(segments) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", "apex_x", "apex_y", "apex_z", "point_count"])
    for seg in segments:
        a = seg.apex
        w.writerow([seg.id, repr(a.x), repr(a.y), repr(a.z), len(seg)])
    return buf.getvalue()
