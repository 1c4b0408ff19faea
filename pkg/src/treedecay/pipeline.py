"""Stage orchestration shared by the command line and the tests."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from .cloud import PointCloud
from .errors import FormatError, StageError, TreeDecayError
from .evaluation import AugmentConfig, augment
from .features import feature_csv, global_feature_vector
from .forest import tree_seed
from .fusion import colorize, normalize_channels
from .projection import AZIMUTHS, CanvasSpec, project_views
from .segmentation import SegParams, TreeSegment, filter_segments, segment_trees
from .terrain import PtdParams, build_dtm, filter_ground, normalize_heights


@dataclass(frozen=True)
class FeatureOptions:
    levels: int = 16
    hsv_bins: int = 8
    include_optional: bool = False


@dataclass(frozen=True, eq=False)
class FeatureTable:
    """One row per view image (four per tree, azimuth-major within a tree)."""

    X: np.ndarray
    labels: np.ndarray  # 0 where unknown
    groups: np.ndarray
    tree_ids: np.ndarray
    azimuths: np.ndarray
    names: list = field(default_factory=list)

    def __len__(self):
        return len(self.X)

    def sample_ids(self):
        return [f"{t}_{int(a):03d}" for t, a in zip(self.tree_ids, self.azimuths)]


def _tree_rows(tree, canvas, options):
    views = project_views(tree, canvas)
    vectors = [global_feature_vector(v, options.levels, options.hsv_bins,
                                     options.include_optional) for v in views]
    return views, vectors


def tree_features(trees, canvas: CanvasSpec, labels=None, groups=None,
                  options: FeatureOptions = FeatureOptions(), n_jobs: int = 1,
                  keep_views: bool = False):
    """Project every tree and extract one feature vector per view.

    Returns ``(table, views)``; ``views`` is a list of four-view lists when
    ``keep_views`` is set, else ``None``.
    """
    trees = list(trees)
    if not trees:
        raise StageError("features", "no trees to project")
    work = Parallel(n_jobs=n_jobs)(delayed(_tree_rows)(t, canvas, options) for t in trees)
    labels = np.zeros(len(trees), dtype=np.int64) if labels is None else np.asarray(labels)
    ids = np.array([t.id if isinstance(t, TreeSegment) else i for i, t in enumerate(trees)])
    groups = ids if groups is None else np.asarray(groups)
    X = np.array([v.values for _, vecs in work for v in vecs])
    names = work[0][1][0].names
    table = FeatureTable(X, np.repeat(labels, len(AZIMUTHS)), np.repeat(groups, len(AZIMUTHS)),
                         np.repeat(ids, len(AZIMUTHS)), np.tile(AZIMUTHS, len(trees)), names)
    return table, ([w[0] for w in work] if keep_views else None)


def _augmented_tree(tree, config, seed):
    cloud = tree.points if isinstance(tree, TreeSegment) else tree
    return augment(cloud, AugmentConfig(config.rotation, config.removal_fraction,
                                        config.jitter_sigma, seed))


def augmented_features(trees, labels, groups, canvas: CanvasSpec,
                       config: AugmentConfig = AugmentConfig(), copies: int = 1,
                       options: FeatureOptions = FeatureOptions(), n_jobs: int = 1):
    """Feature rows of ``copies`` augmented versions of every tree.

    Copy c of the tree in group g uses seed ``tree_seed(config.seed, g * copies + c)``,
    so a tree's augmented rows do not depend on which fold it trains in.
    """
    clouds, labs, grps = [], [], []
    for tree, lab, g in zip(trees, labels, groups):
        for c in range(copies):
            clouds.append(_augmented_tree(tree, config, tree_seed(config.seed, int(g) * copies + c)))
            labs.append(lab)
            grps.append(g)
    table, _ = tree_features(clouds, canvas, labs, grps, options, n_jobs)
    return table


@dataclass(frozen=True, eq=False)
class PlotResult:
    colored: PointCloud
    outside: np.ndarray
    ground: np.ndarray
    dtm: object
    normalized: PointCloud
    segments: list
    kept: list
    rejected: list


def process_plot(cloud: PointCloud, raster, ptd: PtdParams = PtdParams(),
                 seg: SegParams = SegParams(), dtm_cell: float = 1.0) -> PlotResult:
    """colorize -> normalize channels -> ground filter -> DTM -> heights -> segments."""
    def stage(name, fn, *args):
        try:
            return fn(*args)
        except StageError:
            raise
        except (TreeDecayError, ValueError) as exc:
            raise StageError(name, str(exc)) from exc

    colored, outside = stage("fusion", colorize, cloud, raster)
    colored = stage("fusion", normalize_channels, colored)
    ground = stage("terrain", filter_ground, colored, ptd)
    dtm = stage("terrain", build_dtm, colored, ground, dtm_cell)
    normalized = stage("normalize", normalize_heights, colored, dtm)
    above = normalized.subset(~ground)
    if len(above) == 0:
        raise StageError("segmentation", "no non-ground points left")
    segments = stage("segmentation", segment_trees, above, seg)
    # report indices into the input cloud rather than the non-ground subset
    offgrid = np.flatnonzero(~ground)
    segments = [TreeSegment(s.points, s.id, offgrid[s.indices]) for s in segments]
    kept, rejected = filter_segments(segments, seg)
    if not kept:
        raise StageError("segmentation", "no tree segment passed the size filters")
    return PlotResult(colored, outside, ground, dtm, normalized, segments, kept, rejected)


FEATURE_META = ("sample_id", "tree_id", "azimuth", "label")


def feature_table_csv(table: FeatureTable) -> str:
    rows = [(sid, int(t), a, int(l) if l else None, x) for sid, t, a, l, x in
            zip(table.sample_ids(), table.tree_ids, table.azimuths, table.labels, table.X)]
    return feature_csv(rows, table.names)


def read_feature_table(text: str) -> FeatureTable:
    """Parse a feature CSV; errors name the offending line and column."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(header[:4]) != FEATURE_META or len(header) < 5:
        raise FormatError(f"line 1: feature CSV header must start with {','.join(FEATURE_META)}")
    names = header[4:]
    rows, tree_ids, azimuths, labels = [], [], [], []
    for lineno, rec in enumerate(reader, 2):
        if not rec:
            continue
        if len(rec) != len(header):
            raise FormatError(f"line {lineno}: expected {len(header)} columns, got {len(rec)}")
        values = []
        for col, (name, cell) in enumerate(zip(header, rec), 1):
            if name == "sample_id":
                continue
            try:
                if name == "label":
                    values.append(int(cell) if cell.strip() else 0)
                elif name in ("tree_id", "azimuth"):
                    values.append(int(cell))
                else:
                    values.append(float(cell))
            except ValueError:
                raise FormatError(f"line {lineno}, column {col} ({name}): "
                                  f"bad value {cell!r}") from None
        tree_ids.append(values[0])
        azimuths.append(values[1])
        labels.append(values[2])
        rows.append(values[3:])
    if not rows:
        raise FormatError("feature CSV has no data rows")
    X = np.array(rows, dtype=np.float64)
    if not np.isfinite(X).all():
        bad = np.argwhere(~np.isfinite(X))[0]
        raise FormatError(f"line {bad[0] + 2}, column {bad[1] + 5}: non-finite value")
    tree_ids = np.array(tree_ids)
    return FeatureTable(X, np.array(labels), tree_ids.copy(), tree_ids, np.array(azimuths),
                        list(names))
