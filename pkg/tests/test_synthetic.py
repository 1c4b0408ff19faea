import numpy as np
import pytest

from treedecay.cloud import NORMALIZED
from treedecay.synthetic import (DEFAULT_COUNTS, POINT_COUNTS, PlotSpec, SyntheticSpec,
                                 generate_dataset, generate_plot, generate_synthetic_tree,
                                 manifest_csv, read_manifest, sample_point_count)


def test_point_counts_stay_in_level_ranges():
    rng = np.random.default_rng(0)
    for level, (lo, hi, _) in POINT_COUNTS.items():
        counts = [sample_point_count(level, rng) for _ in range(2000)]
        assert lo <= min(counts) and max(counts) <= hi


def test_mean_point_counts_follow_table():
    rng = np.random.default_rng(1)
    for level, (_, _, mean) in POINT_COUNTS.items():
        counts = [sample_point_count(level, rng) for _ in range(4000)]
        assert np.mean(counts) == pytest.approx(mean, rel=0.25)


def test_tree_is_deterministic_and_normalized():
    a = generate_synthetic_tree(3, SyntheticSpec(seed=5), seed=2)
    b = generate_synthetic_tree(3, SyntheticSpec(seed=5), seed=2)
    assert a.tree.points.equals(b.tree.points)
    assert a.label == 3 and a.source == "synthetic"
    pts = a.tree.points
    assert pts.channel_state == NORMALIZED
    assert pts.channels.min() >= 0 and pts.channels.max() <= 1
    assert pts.z.min() >= 0
    c = generate_synthetic_tree(3, SyntheticSpec(seed=6), seed=2)
    assert not c.tree.points.equals(a.tree.points)


def test_tree_rejects_bad_level_and_spec():
    with pytest.raises(ValueError):
        generate_synthetic_tree(6)
    with pytest.raises(ValueError):
        SyntheticSpec(height_range=(1.0, 10.0))
    with pytest.raises(ValueError):
        SyntheticSpec(color_sigma=-0.1)


def test_dataset_counts():
    samples = generate_dataset()
    assert len(samples) == sum(DEFAULT_COUNTS.values()) == 1030
    labels = np.array([s.label for s in samples])
    for level, c in DEFAULT_COUNTS.items():
        assert (labels == level).sum() == c
    assert [s.tree.id for s in samples] == list(range(1030))
    assert [s.group for s in samples] == list(range(1030))
    assert generate_dataset(counts={1: 0, 2: 0, 3: 0, 4: 0, 5: 0}) == []
    with pytest.raises(ValueError):
        generate_dataset(counts={1: -1})


def test_dataset_is_deterministic():
    counts = {1: 2, 2: 2, 3: 1, 4: 1, 5: 2}
    a = generate_dataset(SyntheticSpec(seed=3), counts)
    b = generate_dataset(SyntheticSpec(seed=3), counts)
    assert manifest_csv(a) == manifest_csv(b)
    assert all(x.tree.points.equals(y.tree.points) for x, y in zip(a, b))


def test_level_one_and_five_separate_on_mean_nir():
    spec = SyntheticSpec()
    l1 = [generate_synthetic_tree(1, spec, seed=s).tree.points.channels[:, 0].mean()
          for s in range(100)]
    l5 = [generate_synthetic_tree(5, spec, seed=s).tree.points.channels[:, 0].mean()
          for s in range(100)]
    cut = (np.mean(l1) + np.mean(l5)) / 2
    correct = (np.array(l1) > cut).sum() + (np.array(l5) <= cut).sum()
    assert correct / 200 >= 0.99


def test_manifest_round_trip():
    samples = generate_dataset(counts={1: 1, 2: 1, 3: 0, 4: 0, 5: 1})
    files = [f"t{i}.txt" for i in range(3)]
    rows = read_manifest(manifest_csv(samples, files))
    assert [r["sample_id"] for r in rows] == [s.tree.id for s in samples]
    assert [r["label"] for r in rows] == [s.label for s in samples]
    assert [r["file"] for r in rows] == files
    assert read_manifest("") == []
    with pytest.raises(ValueError, match="lacks"):
        read_manifest("sample_id,label\n1,2\n")
    with pytest.raises(ValueError, match="line 2"):
        read_manifest("sample_id,label,group,file\n1,9,1,a\n")


def test_generate_plot():
    cloud, raster, truth = generate_plot(PlotSpec(size=24.0, seed=1))
    assert len(truth) == 4
    assert sorted(t[2] for t in truth) == [1, 2, 3, 4]
    assert raster.planes.shape == (3, 96, 96)
    # every stem sits inside the plot and the raster covers it
    for x, y, _ in truth:
        assert 0 < x < 24 and 0 < y < 24
    assert cloud.z.min() > 290
    assert cloud.intensity.max() <= 1000
