import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from treedecay.cloud import PointCloud
from treedecay.errors import EmptyCloudError
from treedecay.segmentation import (SegParams, TreeSegment, crop_cylinder, filter_segments,
                                    residual_mask, segment_manifest_csv, segment_trees)


def oracle_segments(xyz, threshold, min_height):
    """Literal greedy scan with brute-force distances."""
    n = len(xyz)
    order = sorted(range(n), key=lambda i: (-xyz[i, 2], i))
    label = [-1] * n
    trees = []
    while True:
        seeds = [i for i in order if label[i] < 0]
        if not seeds or xyz[seeds[0], 2] < min_height:
            break
        tid = len(trees)
        label[seeds[0]] = tid
        members = [seeds[0]]
        others = [i for i in range(n) if label[i] >= 0 and label[i] != tid]
        changed = True
        while changed:
            changed = False
            for i in order:
                if label[i] >= 0:
                    continue
                d_cur = min(np.hypot(*(xyz[i, :2] - xyz[j, :2])) for j in members)
                d_oth = min((np.hypot(*(xyz[i, :2] - xyz[j, :2])) for j in others), default=np.inf)
                if d_cur < threshold and d_cur <= d_oth:
                    label[i] = tid
                    members.append(i)
                    changed = True
        trees.append(sorted(members))
    return trees


def column(x, y, n=20, top=10.0):
    return np.column_stack([np.full(n, x), np.full(n, y), np.linspace(0.5, top, n)])


def test_two_columns_five_meters_apart():
    xyz = np.vstack([column(0, 0), column(5, 0, top=8)])
    segs = segment_trees(PointCloud(xyz))
    assert len(segs) == 2
    assert sorted(len(s) for s in segs) == [20, 20]
    assert segs[0].indices.tolist() == list(range(20))


def test_single_column_is_one_segment():
    segs = segment_trees(PointCloud(column(1, 1)))
    assert len(segs) == 1 and len(segs[0]) == 20


def test_columns_closer_than_threshold_merge():
    segs = segment_trees(PointCloud(np.vstack([column(0, 0), column(0.3, 0)])))
    assert len(segs) == 1 and len(segs[0]) == 40


def test_all_low_points_give_no_segments():
    assert segment_trees(PointCloud(column(0, 0, top=1.5))) == []
    with pytest.raises(EmptyCloudError):
        segment_trees(PointCloud.empty())
    with pytest.raises(ValueError):
        segment_trees(PointCloud([[0, 0, -1.0]]))


def test_matches_brute_force_oracle():
    rng = np.random.default_rng(7)
    for trial in range(5):
        centers = rng.uniform(0, 6, (4, 2))
        pts = []
        for c in centers:
            h = rng.uniform(3, 10)
            k = 40
            r = rng.uniform(0, 1.2, k) * (1 - rng.uniform(0, 1, k))
            a = rng.uniform(0, 2 * np.pi, k)
            pts.append(np.column_stack([c[0] + r * np.cos(a), c[1] + r * np.sin(a),
                                        rng.uniform(0, h, k)]))
        xyz = np.vstack(pts)
        got = [s.indices.tolist() for s in segment_trees(PointCloud(xyz))]
        assert got == oracle_segments(xyz, 0.5, 2.0)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.floats(-1000, 1000), st.floats(-1000, 1000))
def test_translation_equivariance_and_disjointness(seed, dx, dy):
    rng = np.random.default_rng(seed)
    xyz = np.column_stack([rng.uniform(0, 4, 80), rng.uniform(0, 4, 80), rng.uniform(0, 12, 80)])
    a = segment_trees(PointCloud(xyz))
    b = segment_trees(PointCloud(xyz + [dx, dy, 0]))
    assert [s.indices.tolist() for s in a] == [s.indices.tolist() for s in b]
    seen = np.concatenate([s.indices for s in a]) if a else np.array([], int)
    assert len(seen) == len(np.unique(seen))
    assert residual_mask(80, a).sum() == 80 - len(seen)


def test_tree_segment_apex():
    seg = TreeSegment(PointCloud([[0, 0, 1.0], [1, 2, 5.0], [2, 2, 3.0]]), 3)
    assert seg.apex_index == 1 and seg.stem_xy == (1.0, 2.0) and seg.height == 5.0
    with pytest.raises(EmptyCloudError):
        TreeSegment(PointCloud.empty(), 0)


def test_filter_segments_examples():
    small = TreeSegment(PointCloud(column(0, 0, n=10)), 0)
    big = TreeSegment(PointCloud(column(0, 0, n=3346, top=20.0)), 1)
    kept, rejected = filter_segments([small, big])
    assert kept == [big] and rejected == [small]
    assert filter_segments([]) == ([], [])
    with pytest.raises(ValueError):
        SegParams(threshold=0)


def test_crop_cylinder_examples():
    cloud = PointCloud([[3.0, 4.0, 0.0], [1.0, 1.0, 1.0], [6, 0, 0]])
    out = crop_cylinder(cloud, (0, 0), 5.0)
    np.testing.assert_array_equal(out.xyz, cloud.xyz[:2])
    assert crop_cylinder(cloud, (0, 0), 30).equals(cloud)
    assert len(crop_cylinder(cloud, (1e6, 0), 30)) == 0
    with pytest.raises(ValueError):
        crop_cylinder(cloud, (0, 0), 0)


def test_segment_manifest_csv():
    seg = TreeSegment(PointCloud([[1.0, 2.0, 3.0]]), 7)
    assert segment_manifest_csv([seg]).splitlines() == [
        "id,apex_x,apex_y,apex_z,point_count", "7,1.0,2.0,3.0,1"]
