"""Synthetic five-level conifer generator and synthetic survey plots.

The geometry is deliberately simple: a stem cylinder plus a crown built from
a cone (levels 1-2), a cone thinned to about half of its branch whorls
(level 3), a few sparse branches under a broken top (level 4), or a bare
broken stem (level 5).  Point counts follow a truncated lognormal per level
whose mean matches the field statistics listed in ``POINT_COUNTS``.  Colors
are Gaussian around the per-level (nir, r, g) means in ``LEVELS``; these are
generator constants, not measurements.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq
from scipy.stats import norm

from .cloud import NORMALIZED, DECAY_LEVELS, GeoRaster, PointCloud, decay_level
from .segmentation import TreeSegment

# (min, max, mean) points per tree for each level
POINT_COUNTS = {1: (845, 10295, 3346), 2: (1586, 14405, 4785), 3: (644, 5963, 2139),
                4: (121, 2799, 637), 5: (16, 1418, 161)}
DEFAULT_COUNTS = {1: 233, 2: 167, 3: 236, 4: 239, 5: 155}
HEIGHT_RANGE = (5.0, 40.0)


@dataclass(frozen=True)
class LevelModel:
    """Generator constants of one decay level.

    Args:
        color: mean normalized (nir, r, g).
        stem_fraction: share of points on the stem.
        whorl_keep: fraction of crown whorls kept (1 = full crown).
        branches: (min, max) number of sparse branches; (0, 0) for a cone crown.
        top_kept: (min, max) fraction of the height that survives a broken top.
        intensity: mean normalized return intensity.
    """

    color: tuple
    stem_fraction: float
    whorl_keep: float = 1.0
    branches: tuple = (0, 0)
    top_kept: tuple = (1.0, 1.0)
    intensity: float = 0.5


LEVELS = {
    1: LevelModel((0.85, 0.30, 0.30), 0.05, intensity=0.60),
    2: LevelModel((0.55, 0.55, 0.35), 0.05, intensity=0.55),
    3: LevelModel((0.40, 0.45, 0.55), 0.15, whorl_keep=0.5, intensity=0.45),
    4: LevelModel((0.45, 0.47, 0.47), 0.40, branches=(6, 14), top_kept=(0.6, 0.85),
                  intensity=0.40),
    5: LevelModel((0.68, 0.70, 0.70), 0.85, branches=(0, 4), top_kept=(0.4, 0.8),
                  intensity=0.35),
}


@dataclass(frozen=True)
class SyntheticSpec:
    """Settings shared by every generated tree."""

    seed: int = 0
    height_range: tuple = HEIGHT_RANGE
    height_mean: float = 22.0
    height_sd: float = 6.0
    color_sigma: float = 0.04
    count_sigma: float = 0.7  # log-space spread of the point-count distribution
    levels: dict = field(default_factory=lambda: dict(LEVELS))
    point_counts: dict = field(default_factory=lambda: dict(POINT_COUNTS))

    def __post_init__(self):
        lo, hi = self.height_range
        if not HEIGHT_RANGE[0] <= lo < hi <= HEIGHT_RANGE[1]:
            raise ValueError(f"height range must lie within {HEIGHT_RANGE}")
        if self.color_sigma < 0 or self.count_sigma <= 0:
            raise ValueError("sigmas must be positive")


@dataclass(frozen=True, eq=False)
class LabeledSample:
    tree: TreeSegment
    label: int
    source: str
    group: int

    def __post_init__(self):
        decay_level(self.label)


# -- point counts -------------------------------------------------------------


def _truncated_lognormal_mean(mu, sigma, lo, hi):
    a, b = (math.log(lo) - mu) / sigma, (math.log(hi) - mu) / sigma
    mass = norm.cdf(b) - norm.cdf(a)
    return math.exp(mu + sigma ** 2 / 2) * (norm.cdf(b - sigma) - norm.cdf(a - sigma)) / mass


@lru_cache(maxsize=None)
def calibrated_mu(lo: int, hi: int, mean: float, sigma: float) -> float:
    """Log-space location whose lognormal, truncated to [lo, hi], has ``mean``."""
    return brentq(lambda mu: _truncated_lognormal_mean(mu, sigma, lo, hi) - mean,
                  math.log(lo) - 3 * sigma, math.log(hi) + 3 * sigma, xtol=1e-12)


def sample_point_count(level: int, rng, spec: SyntheticSpec = SyntheticSpec()) -> int:
    """Draw a point count inside the level's [min, max]."""
    lo, hi, mean = spec.point_counts[level]
    sigma = spec.count_sigma
    mu = calibrated_mu(lo, hi, float(mean), sigma)
    a, b = norm.cdf((math.log(lo) - mu) / sigma), norm.cdf((math.log(hi) - mu) / sigma)
    value = math.exp(mu + sigma * norm.ppf(rng.uniform(a, b)))
    return int(min(max(round(value), lo), hi))


# -- geometry -----------------------------------------------------------------


def _stem(rng, n, top, radius):
    z = rng.uniform(0.0, top, n)
    r = radius * (1.0 - 0.6 * z / top) * rng.uniform(0.8, 1.0, n)
    a = rng.uniform(0, 2 * math.pi, n)
    return np.column_stack([r * np.cos(a), r * np.sin(a), z])


def _cone(rng, n, base, top, radius, whorls=None):
    """Crown points; density follows the cone cross-section, biased to the shell."""
    z = top - (top - base) * np.sqrt(rng.random(n))
    if whorls is not None:
        z = whorls[rng.integers(0, len(whorls), n)] + rng.normal(0.0, 0.12, n)
        z = np.clip(z, base, top)
    limit = radius * (top - z) / (top - base)
    r = limit * rng.random(n) ** 0.35
    a = rng.uniform(0, 2 * math.pi, n)
    return np.column_stack([r * np.cos(a), r * np.sin(a), z])


def _branches(rng, n, count, base, top, radius):
    if count == 0 or n == 0:
        return np.empty((0, 3))
    zb = rng.uniform(base, top, count)
    az = rng.uniform(0, 2 * math.pi, count)
    length = 0.3 + radius * rng.uniform(0.3, 0.8, count) * (top - zb + 0.5) / (top - base + 0.5)
    which = rng.integers(0, count, n)
    t = rng.random(n)
    along = t * length[which]
    z = zb[which] - 0.15 * along + rng.normal(0.0, 0.05, n)
    x = along * np.cos(az[which]) + rng.normal(0.0, 0.05, n)
    y = along * np.sin(az[which]) + rng.normal(0.0, 0.05, n)
    return np.column_stack([x, y, np.maximum(z, 0.0)])


def _tree_xyz(level, n, rng, spec):
    model = spec.levels[level]
    lo, hi = spec.height_range
    height = float(np.clip(rng.normal(spec.height_mean, spec.height_sd), lo, hi))
    radius = 0.5 + height * rng.uniform(0.08, 0.14)
    crown_base = height * rng.uniform(0.35, 0.55)
    top = height * rng.uniform(*model.top_kept)
    n_stem = max(1, int(round(n * model.stem_fraction)))
    n_crown = n - n_stem
    stem_radius = 0.1 + 0.008 * height
    parts = [_stem(rng, n_stem, top, stem_radius)]
    if model.branches != (0, 0):
        count = int(rng.integers(model.branches[0], model.branches[1] + 1))
        if count == 0:
            parts = [_stem(rng, n, top, stem_radius)]
        else:
            parts.append(_branches(rng, n_crown, count, min(crown_base * 0.7, top * 0.5), top,
                                   radius))
    else:
        whorls = None
        if model.whorl_keep < 1.0:
            spacing = 0.8
            all_whorls = np.arange(crown_base, top, spacing)
            keep = max(2, int(round(len(all_whorls) * model.whorl_keep)))
            whorls = np.sort(rng.choice(all_whorls, size=min(keep, len(all_whorls)),
                                        replace=False))
        parts.append(_cone(rng, n_crown, crown_base, top, radius, whorls))
    xyz = np.concatenate(parts)
    xyz[:, 2] = np.maximum(xyz[:, 2], 0.0)
    return xyz


def generate_synthetic_tree(level: int, spec: SyntheticSpec = SyntheticSpec(), seed: int = 0,
                            sample_id: int = 0) -> LabeledSample:
    """One labeled synthetic tree standing at the origin (ground z = 0)."""
    level = decay_level(level)
    rng = np.random.default_rng((spec.seed, level, seed))
    n = sample_point_count(level, rng, spec)
    xyz = _tree_xyz(level, n, rng, spec)
    model = spec.levels[level]
    channels = np.clip(rng.normal(model.color, spec.color_sigma, (n, 3)), 0.0, 1.0)
    intensity = np.clip(rng.normal(model.intensity, 0.1, n), 0.0, 1.0)
    cloud = PointCloud(xyz, intensity, channels, NORMALIZED)
    return LabeledSample(TreeSegment(cloud, sample_id), level, "synthetic", sample_id)


def generate_dataset(spec: SyntheticSpec = SyntheticSpec(), counts=None) -> list[LabeledSample]:
    """``counts[level]`` trees per level in a seeded shuffled order.

    Sample ``i`` of the result has id and group ``i``.
    """
    counts = dict(DEFAULT_COUNTS if counts is None else counts)
    for level, c in counts.items():
        decay_level(level)
        if c < 0:
            raise ValueError(f"negative count for level {level}")
    plan = [(level, j) for level in DECAY_LEVELS for j in range(counts.get(level, 0))]
    order = np.random.default_rng(spec.seed).permutation(len(plan))
    return [generate_synthetic_tree(plan[k][0], spec, plan[k][1], i)
            for i, k in enumerate(order)]


def manifest_csv(samples, files=None) -> str:
    """sample_id, label, source, group, point_count[, file]."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sample_id", "label", "source", "group", "point_count", "file"])
    for i, s in enumerate(samples):
        w.writerow([s.tree.id, s.label, s.source, s.group, len(s.tree),
                    "" if files is None else files[i]])
    return buf.getvalue()


def read_manifest(text: str) -> list[dict]:
    rows = list(csv.DictReader(io.StringIO(text)))
    required = {"sample_id", "label", "group", "file"}
    if not rows:
        return []
    missing = required - set(rows[0])
    if missing:
        raise ValueError(f"manifest lacks columns {sorted(missing)}")
    for lineno, row in enumerate(rows, 2):
        try:
            row["sample_id"] = int(row["sample_id"])
            row["label"] = decay_level(int(row["label"]))
            row["group"] = int(row["group"])
        except ValueError as exc:
            raise ValueError(f"manifest line {lineno}: {exc}") from None
    return rows


# -- synthetic plots ----------------------------------------------------------


@dataclass(frozen=True)
class PlotSpec:
    """A square survey plot with sloped terrain, trees and a CIR raster."""

    size: float = 60.0
    tree_spacing: float = 12.0
    ground_density: float = 4.0  # points per square meter
    pixel_size: float = 0.25
    base_elevation: float = 300.0
    seed: int = 0


def terrain_height(x, y, base=300.0):
    return base + 0.05 * np.asarray(x) + 0.5 * np.sin(np.asarray(y) / 8.0)


def generate_plot(plot: PlotSpec = PlotSpec(), spec: SyntheticSpec = SyntheticSpec()):
    """Returns ``(cloud, raster, truth)``.

    ``cloud`` is a raw cloud (x, y, z, intensity 0-1000) without colors,
    ``raster`` is a CIR image whose crown disks carry the level colors, and
    ``truth`` lists ``(x, y, level)`` stem positions.
    """
    rng = np.random.default_rng((plot.seed, 7))
    n_ground = int(plot.size * plot.size * plot.ground_density)
    gxy = rng.uniform(0.0, plot.size, (n_ground, 2))
    gz = terrain_height(gxy[:, 0], gxy[:, 1], plot.base_elevation) + rng.normal(0, 0.02, n_ground)
    parts = [np.column_stack([gxy, gz])]
    intensity = [rng.uniform(0.1, 0.3, n_ground)]

    width = height = int(math.ceil(plot.size / plot.pixel_size))
    planes = np.empty((3, height, width), dtype=np.uint8)
    planes[:] = np.array([60, 70, 60], dtype=np.uint8)[:, None, None]
    px = plot.pixel_size
    transform = (px, 0.0, 0.0, -px, px / 2, plot.size - px / 2)
    cols = (np.arange(width) + 0.5) * px
    rows_y = plot.size - (np.arange(height) + 0.5) * px

    truth = []
    centers = np.arange(plot.tree_spacing / 2, plot.size, plot.tree_spacing)
    k = 0
    for cy in centers:
        for cx in centers:
            level = DECAY_LEVELS[k % len(DECAY_LEVELS)]
            x0 = cx + rng.uniform(-1.5, 1.5)
            y0 = cy + rng.uniform(-1.5, 1.5)
            sample = generate_synthetic_tree(level, spec, seed=10_000 + plot.seed * 1000 + k)
            cloud = sample.tree.points
            xyz = cloud.xyz + [x0, y0, float(terrain_height(x0, y0, plot.base_elevation))]
            parts.append(xyz)
            intensity.append(cloud.intensity)
            reach = float(np.hypot(*(cloud.xyz[:, :2]).T).max()) + px
            dx = cols[None, :] - x0
            dy = rows_y[:, None] - y0
            disk = dx * dx + dy * dy <= reach * reach
            color = np.round(np.array(spec.levels[level].color) * 255).astype(np.uint8)
            for c in range(3):
                planes[c][disk] = color[c]
            truth.append((x0, y0, level))
            k += 1
    xyz = np.concatenate(parts)
    inten = np.round(np.concatenate(intensity) * 1000.0)
    return PointCloud(xyz, inten), GeoRaster(planes, transform), truth
