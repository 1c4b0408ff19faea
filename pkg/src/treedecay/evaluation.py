"""Accuracy metrics, grouped stratified folds, augmentation and cross-validation."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .cloud import PointCloud
from .errors import EmptyCloudError
from .forest import RfConfig, fit_forest, predict
from .projection import rotate_z

# -- metrics ------------------------------------------------------------------


def confusion_matrix(truth, pred, k: int | None = None, classes=None) -> np.ndarray:
    """K x K counts, rows = truth, columns = prediction.

    Labels are ``1..k`` unless an explicit ordered ``classes`` list is given.
    """
    truth = np.asarray(truth)
    pred = np.asarray(pred)
    if truth.shape != pred.shape or truth.ndim != 1:
        raise ValueError(f"truth and prediction lengths differ ({truth.shape} vs {pred.shape})")
    if classes is None:
        if k is None:
            raise ValueError("give either k or classes")
        classes = np.arange(1, k + 1)
    classes = np.asarray(classes)
    kk = len(classes)
    lookup = {c.item() if hasattr(c, "item") else c: i for i, c in enumerate(classes)}
    try:
        ti = np.array([lookup[v.item() if hasattr(v, "item") else v] for v in truth], dtype=np.int64)
        pi = np.array([lookup[v.item() if hasattr(v, "item") else v] for v in pred], dtype=np.int64)
    except KeyError as exc:
        raise ValueError(f"label {exc.args[0]!r} is outside the class list") from None
    return np.bincount(ti * kk + pi, minlength=kk * kk).reshape(kk, kk)


def _total(cm):
    cm = np.asarray(cm)
    n = cm.sum()
    if n <= 0:
        raise ValueError("confusion matrix is empty")
    return cm, n


def overall_accuracy(cm) -> float:
    cm, n = _total(cm)
    return float(np.trace(cm) / n)


def f1_per_class(cm) -> np.ndarray:
    """One-vs-rest F1; a class with TP = FP = FN = 0 scores 0."""
    cm = np.asarray(cm, dtype=np.float64)
    tp = np.diag(cm)
    fp = cm.sum(axis=0) - tp
    fn = cm.sum(axis=1) - tp
    denom = 2 * tp + fp + fn
    out = np.zeros(len(tp))
    ok = denom > 0
    out[ok] = 2 * tp[ok] / denom[ok]
    return out


def cohens_kappa(cm) -> float:
    """``(p_o - p_c) / (1 - p_c)``; undefined (ValueError) when ``p_c == 1``."""
    cm, n = _total(cm)
    cm = cm.astype(np.float64)
    p_o = np.trace(cm) / n
    p_c = float((cm.sum(axis=1) * cm.sum(axis=0)).sum() / (n * n))
    if p_c >= 1.0:
        raise ValueError("kappa is undefined when chance agreement is 1")
    return float((p_o - p_c) / (1.0 - p_c))


# -- folds --------------------------------------------------------------------


def kfold_split(labels, groups=None, k: int = 5, seed: int = 0,
                group_atomic: bool = True) -> list[np.ndarray]:
    """Stratified folds of sample indices that never split a group.

    Within each label the groups are shuffled and dealt round-robin; the
    dealing offset carries over between labels so overall fold sizes stay
    balanced.  With ``group_atomic=False`` every sample is its own group.
    Returns the k test-index arrays (sorted).
    """
    labels = np.asarray(labels)
    n = len(labels)
    if k < 2:
        raise ValueError("k must be >= 2")
    groups = np.arange(n) if groups is None or not group_atomic else np.asarray(groups)
    if len(groups) != n:
        raise ValueError("labels and groups differ in length")
    uniq, first, inverse = np.unique(groups, return_index=True, return_inverse=True)
    group_label = labels[first]
    if (labels != group_label[inverse]).any():
        bad = uniq[np.unique(inverse[labels != group_label[inverse]])[0]]
        raise ValueError(f"group {bad!r} mixes labels")
    rng = np.random.default_rng(seed)
    fold_of_group = np.empty(len(uniq), dtype=np.int64)
    offset = 0
    for lab in np.unique(group_label):
        members = np.flatnonzero(group_label == lab)
        if len(members) < k:
            raise ValueError(f"label {lab!r} has {len(members)} groups, fewer than k={k}")
        members = members[rng.permutation(len(members))]
        fold_of_group[members] = (offset + np.arange(len(members))) % k
        offset = (offset + len(members)) % k
    sample_fold = fold_of_group[inverse]
    return [np.flatnonzero(sample_fold == f) for f in range(k)]


# -- augmentation -------------------------------------------------------------


@dataclass(frozen=True)
class AugmentConfig:
    """Random rotation about the vertical, point removal and Gaussian jitter."""

    rotation: bool = True
    removal_fraction: float = 0.1
    jitter_sigma: float = 0.02
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.removal_fraction < 1:
            raise ValueError("removal_fraction must lie in [0, 1)")
        if self.jitter_sigma < 0:
            raise ValueError("jitter_sigma must be >= 0")


def _augment_once(cloud, config, rng):
    if config.rotation:
        cloud = rotate_z(cloud, rng.uniform(0.0, 360.0))
    keep = rng.random(len(cloud)) >= config.removal_fraction
    if not keep.any():
        return None
    cloud = cloud.subset(keep)
    if config.jitter_sigma > 0:
        xyz = cloud.xyz + rng.normal(0.0, config.jitter_sigma, cloud.xyz.shape)
        cloud = cloud.replace(xyz=xyz)
    return cloud


def augment(cloud: PointCloud, config: AugmentConfig = AugmentConfig()) -> PointCloud:
    """Rotate, then drop points, then jitter x, y, z; channels are untouched.

    If every point is dropped the draw is repeated once with a fresh stream
    derived from the seed.
    """
    if len(cloud) == 0:
        raise EmptyCloudError("cannot augment an empty cloud")
    for attempt in range(2):
        out = _augment_once(cloud, config, np.random.default_rng((config.seed, attempt)))
        if out is not None:
            return out
    raise EmptyCloudError("augmentation removed every point twice")


# -- cross-validation ---------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CrossvalResult:
    """Per-fold rows and their mean, shaped like the usual result tables."""

    classes: np.ndarray
    oa: np.ndarray
    kappa: np.ndarray
    f1: np.ndarray  # (k, K)
    confusion: np.ndarray  # (k, K, K)

    @property
    def mean_oa(self) -> float:
        return float(self.oa.mean())

    @property
    def mean_kappa(self) -> float:
        return float(self.kappa.mean())

    def rows(self):
        """``(label, oa, kappa, f1...)`` for each fold and the average."""
        out = [(str(i + 1), self.oa[i], self.kappa[i], *self.f1[i]) for i in range(len(self.oa))]
        out.append(("average", self.oa.mean(), self.kappa.mean(), *self.f1.mean(axis=0)))
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "oa", "kappa"] + [f"f1_level{c}" for c in self.classes])
        for label, *vals in self.rows():
            w.writerow([label] + [f"{float(v):.6f}" for v in vals])
        return buf.getvalue()


def crossval_run(X, labels, groups, k: int = 5, seed: int = 0, config: RfConfig = RfConfig(),
                 augmented=None, n_jobs: int = 1, group_atomic: bool = True) -> CrossvalResult:
    """k-fold evaluation of the forest on feature rows.

    ``augmented`` is an optional ``(X_aug, labels_aug, groups_aug)`` triple of
    extra rows derived from augmented copies of the trees; a fold trains on
    the augmented rows of its training groups only, so held-out trees are
    never augmented.
    """
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels)
    groups = np.asarray(groups)
    classes = np.unique(labels)
    folds = kfold_split(labels, groups, k=k, seed=seed, group_atomic=group_atomic)
    oa, kappa, f1, cms = [], [], [], []
    for test in folds:
        train = np.ones(len(labels), dtype=bool)
        train[test] = False
        Xt, yt = X[train], labels[train]
        if augmented is not None:
            Xa, ya, ga = (np.asarray(a) for a in augmented)
            use = np.isin(ga, groups[train]) & ~np.isin(ga, groups[test])
            Xt = np.concatenate([Xt, Xa[use]])
            yt = np.concatenate([yt, ya[use]])
        model = fit_forest(Xt, yt, config, n_jobs=n_jobs)
        pred, _ = predict(model, X[test])
        cm = confusion_matrix(labels[test], pred, classes=classes)
        cms.append(cm)
        oa.append(overall_accuracy(cm))
        kappa.append(cohens_kappa(cm))
        f1.append(f1_per_class(cm))
    return CrossvalResult(classes, np.array(oa), np.array(kappa), np.array(f1), np.array(cms))
