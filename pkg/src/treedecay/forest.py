"""Random Forest of weighted-Gini CART trees, built from scratch.

Trees are grown by the compiled kernel in :mod:`treedecay._cart`; this module
handles seeding, bagging, class weighting, prediction, importance,
persistence and the scikit-learn facing estimator.
"""

from __future__ import annotations

import csv
import io
import math
import struct
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.model_selection import ParameterGrid
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import _cart
from .errors import FormatError
from .features import block_of

CLASS_WEIGHTS = ("uniform", "balanced")
_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class RfConfig:
    """Forest hyperparameters.

    Args:
        n_estimators: number of trees.
        max_depth: deepest allowed node (the root has depth 0).
        random_state: top-level seed; per-tree seeds are derived from it.
        class_weight: ``"balanced"`` (N / (K n_c)) or ``"uniform"``.
        features_per_split: ``"sqrt"`` (ceil of sqrt d), ``"log2"``, ``None``
            (all features), an int count or a float fraction of d.
        min_samples_leaf: smallest number of distinct samples per leaf.
        bootstrap: draw a bootstrap sample per tree; disable only for tests.
    """

    n_estimators: int = 800
    max_depth: int = 64
    random_state: int = 42
    class_weight: str = "balanced"
    features_per_split: object = "sqrt"
    min_samples_leaf: int = 1
    bootstrap: bool = True

    def __post_init__(self):
        if int(self.n_estimators) < 1:
            raise ValueError("n_estimators must be >= 1")
        if int(self.max_depth) < 1:
            raise ValueError("max_depth must be >= 1")
        if int(self.min_samples_leaf) < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.class_weight not in CLASS_WEIGHTS:
            raise ValueError(f"class_weight must be one of {CLASS_WEIGHTS}")
        if not 0 <= int(self.random_state) <= _MASK64:
            raise ValueError("random_state must fit in 64 unsigned bits")
        self.resolve_features(1)  # validates the rule

    def resolve_features(self, n_features: int) -> int:
        """Number of candidate features drawn per split for dimension ``d``."""
        rule = self.features_per_split
        if rule is None:
            m = n_features
        elif rule == "sqrt":
            m = math.ceil(math.sqrt(n_features))
        elif rule == "log2":
            m = max(1, math.ceil(math.log2(n_features))) if n_features > 1 else 1
        elif isinstance(rule, (bool, np.bool_)):
            raise ValueError(f"invalid features_per_split {rule!r}")
        elif isinstance(rule, (int, np.integer)):
            if rule < 1:
                raise ValueError("features_per_split count must be >= 1")
            m = int(rule)
        elif isinstance(rule, float):
            if not 0 < rule <= 1:
                raise ValueError("features_per_split fraction must lie in (0, 1]")
            m = math.ceil(rule * n_features)
        else:
            raise ValueError(f"invalid features_per_split {rule!r}")
        return max(1, min(m, n_features))


def balanced_class_weights(counts) -> np.ndarray:
    """``w_c = N / (K n_c)``; every class must be present."""
    counts = np.asarray(counts, dtype=np.float64)
    if counts.ndim != 1 or not len(counts):
        raise ValueError("counts must be a nonempty 1D sequence")
    if (counts <= 0).any():
        raise ValueError("every class needs a positive count")
    return counts.sum() / (len(counts) * counts)


def splitmix64(state: int) -> tuple[int, int]:
    """One splitmix64 step: returns ``(new_state, output)``."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def tree_seed(random_state: int, index: int) -> int:
    """Seed of tree ``index``: the (index+1)-th splitmix64 output from ``random_state``."""
    state = (int(random_state) + index * 0x9E3779B97F4A7C15) & _MASK64
    return splitmix64(state)[1]


def bootstrap_counts(n_samples: int, seed: int) -> np.ndarray:
    """Multiplicity of each sample in the bootstrap draw for ``seed``."""
    draw = np.random.default_rng(seed).integers(0, n_samples, n_samples)
    return np.bincount(draw, minlength=n_samples)


@dataclass(frozen=True, eq=False)
class DecisionTree:
    """Preorder node arrays; ``feature == -1`` marks a leaf.

    ``value[i]`` is the weight-normalized class distribution at node i,
    ``weight[i]`` the total sample weight reaching it and ``gain[i]`` the
    weighted Gini decrease of its split (0 for leaves).
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    weight: np.ndarray
    gain: np.ndarray

    def __len__(self):
        return len(self.feature)

    @property
    def n_leaves(self) -> int:
        return int((self.feature < 0).sum())

    def depth(self) -> int:
        depth = np.zeros(len(self), dtype=np.int64)
        for i in np.flatnonzero(self.feature >= 0):  # preorder: parents come first
            depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def apply(self, X) -> np.ndarray:
        return _cart.apply_tree(X, self.feature, self.threshold, self.left, self.right)

    def predict_proba(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def same_structure(self, other: DecisionTree) -> bool:
        return (np.array_equal(self.feature, other.feature)
                and np.array_equal(self.threshold, other.threshold)
                and np.array_equal(self.left, other.left)
                and np.array_equal(self.right, other.right)
                and np.array_equal(self.value, other.value))


def _as_float_matrix(X) -> np.ndarray:
    return np.ascontiguousarray(X, dtype=np.float64)


def _check_training(X, y, n_classes):
    X = _as_float_matrix(X)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("need a nonempty 2D sample matrix")
    if len(y) != len(X):
        raise ValueError(f"{len(X)} samples but {len(y)} labels")
    if (y < 0).any():
        raise ValueError("labels must be nonnegative class indices")
    n_classes = int(y.max()) + 1 if n_classes is None else int(n_classes)
    if y.max() >= n_classes:
        raise ValueError("label exceeds n_classes")
    return X, y, n_classes


def _grow(XT, y, w, config, seed, n_classes):
    if w.shape != y.shape or (w < 0).any():
        raise ValueError("weights must be nonnegative, one per sample")
    rows = np.flatnonzero(w > 0)
    if not len(rows):
        raise ValueError("all sample weights are zero")
    arrays = _cart.grow_tree(XT, y, w, rows, n_classes, int(config.max_depth),
                             int(config.min_samples_leaf), config.resolve_features(XT.shape[0]),
                             np.uint64(seed & _MASK64))
    return DecisionTree(*arrays)


def fit_tree(X, y, weights=None, config: RfConfig = RfConfig(), seed: int = 0,
             n_classes: int | None = None) -> DecisionTree:
    """Grow one CART tree on class indices ``y`` in ``[0, n_classes)``.

    Rows with zero weight are ignored.  At each node the kernel draws features
    in a seeded random order, skipping features constant at the node, until
    ``features_per_split`` non-constant ones were scored.
    """
    X, y, n_classes = _check_training(X, y, n_classes)
    w = np.ones(len(y)) if weights is None else np.asarray(weights, dtype=np.float64)
    return _grow(np.ascontiguousarray(X.T), y, w, config, seed, n_classes)


@dataclass(frozen=True, eq=False)
class ForestModel:
    trees: list
    config: RfConfig
    classes: np.ndarray
    n_features: int
    feature_names: tuple = field(default=None)

    def __post_init__(self):
        if len(self.trees) != self.config.n_estimators:
            raise ValueError("tree count must equal n_estimators")


def _class_weight_vector(y_idx, n_classes, rule):
    if rule == "uniform":
        return np.ones(n_classes)
    return balanced_class_weights(np.bincount(y_idx, minlength=n_classes))


def _grow_member(XT, y_idx, class_w, config, index, n_classes):
    seed = tree_seed(config.random_state, index)
    counts = bootstrap_counts(len(y_idx), seed) if config.bootstrap else np.ones(len(y_idx))
    return _grow(XT, y_idx, counts * class_w[y_idx], config, seed, n_classes)


def fit_forest(X, labels, config: RfConfig = RfConfig(), n_jobs: int = 1,
               feature_names=None) -> ForestModel:
    """Bagged CART ensemble; tree i uses seed ``tree_seed(random_state, i)``.

    The result does not depend on ``n_jobs``.
    """
    X = _as_float_matrix(X)
    labels = np.asarray(labels)
    if X.ndim != 2 or len(X) == 0:
        raise ValueError("need a nonempty 2D sample matrix")
    if len(labels) != len(X):
        raise ValueError(f"{len(X)} samples but {len(labels)} labels")
    classes, y_idx = np.unique(labels, return_inverse=True)
    if len(classes) < 2:
        raise ValueError("need at least two classes to fit a forest")
    class_w = _class_weight_vector(y_idx, len(classes), config.class_weight)
    XT = np.ascontiguousarray(X.T)
    jobs = (delayed(_grow_member)(XT, y_idx, class_w, config, i, len(classes))
            for i in range(config.n_estimators))
    trees = Parallel(n_jobs=n_jobs, prefer="threads")(jobs)
    names = None if feature_names is None else tuple(str(n) for n in feature_names)
    return ForestModel(trees, config, classes, X.shape[1], names)


def _check_dim(model, X):
    X = _as_float_matrix(X)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise ValueError(f"expected {model.n_features} features, got shape {X.shape}")
    return X


def predict_proba(model: ForestModel, X) -> np.ndarray:
    """Mean of the leaf distributions reached in every tree."""
    X = _check_dim(model, X)
    total = np.zeros((len(X), len(model.classes)))
    for tree in model.trees:
        total += tree.predict_proba(X)
    return total / len(model.trees)


def predict(model: ForestModel, X):
    """``(labels, probabilities)``; probability ties go to the lower class."""
    proba = predict_proba(model, X)
    return model.classes[np.argmax(proba, axis=1)], proba


def feature_importance(model: ForestModel) -> np.ndarray:
    """Mean decrease in weighted Gini impurity per feature, summing to 1.

    Each tree's decreases are normalized to sum 1 before averaging; trees
    without a split contribute nothing.
    """
    total = np.zeros(model.n_features)
    for tree in model.trees:
        inner = tree.feature >= 0
        per = np.bincount(tree.feature[inner], weights=tree.gain[inner],
                          minlength=model.n_features)
        s = per.sum()
        if s > 0:
            total += per / s
    s = total.sum()
    return total / s if s > 0 else total


def ranked_importance(model: ForestModel, names=None) -> list[tuple[str, float]]:
    """``(name, importance)`` sorted by decreasing importance (stable by index)."""
    imp = feature_importance(model)
    names = names or model.feature_names or [f"f{i}" for i in range(model.n_features)]
    order = np.argsort(-imp, kind="stable")
    return [(names[i], float(imp[i])) for i in order]


def block_importance(importances, names) -> list[tuple[str, float]]:
    """Sum importances per feature block (name prefix before ``_``), ranked."""
    totals = {}
    for name, v in zip(names, importances):
        totals[block_of(name)] = totals.get(block_of(name), 0.0) + float(v)
    return sorted(totals.items(), key=lambda kv: -kv[1])


def importance_csv(ranked) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["rank", "feature", "importance"])
    for rank, (name, v) in enumerate(ranked, 1):
        w.writerow([rank, name, repr(v)])
    return buf.getvalue()


def expand_grid(grid) -> list[dict]:
    """A list of parameter dicts is used as is; a dict of lists is expanded."""
    if isinstance(grid, dict):
        cells = list(ParameterGrid(grid))
    else:
        cells = [dict(c) for c in grid]
    if not cells:
        raise ValueError("grid must be nonempty")
    return cells


def grid_search(X, labels, grid, k: int = 5, seed: int = 0, base: RfConfig = RfConfig(),
                groups=None, n_jobs: int = 1):
    """Pick the grid cell with the best mean k-fold OA (ties: first in grid order).

    Returns ``(best_config, table)`` where ``table`` lists
    ``(cell, mean_oa, fold_oas)`` for every cell in grid order.
    """
    # evaluation builds on this module, so import it lazily
    from .evaluation import confusion_matrix, kfold_split, overall_accuracy

    if k < 2:
        raise ValueError("k must be >= 2")
    X = _as_float_matrix(X)
    labels = np.asarray(labels)
    groups = np.arange(len(labels)) if groups is None else np.asarray(groups)
    folds = kfold_split(labels, groups, k=k, seed=seed)
    classes = np.unique(labels)
    table = []
    best, best_score = None, -np.inf
    for cell in expand_grid(grid):
        config = replace(base, **cell)
        scores = []
        for test in folds:
            train = np.setdiff1d(np.arange(len(labels)), test)
            model = fit_forest(X[train], labels[train], config, n_jobs=n_jobs)
            pred, _ = predict(model, X[test])
            cm = confusion_matrix(labels[test], pred, classes=classes)
            scores.append(overall_accuracy(cm))
        mean = float(np.mean(scores))
        table.append((cell, mean, scores))
        if mean > best_score:
            best, best_score = config, mean
    return best, table


def grid_table_csv(table) -> str:
    keys = sorted({k for cell, _, _ in table for k in cell})
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    n_folds = max(len(s) for _, _, s in table)
    w.writerow(keys + ["mean_oa"] + [f"fold{i + 1}_oa" for i in range(n_folds)])
    for cell, mean, scores in table:
        w.writerow([cell.get(k, "") for k in keys] + [repr(mean)] + [repr(s) for s in scores])
    return buf.getvalue()


# -- persistence --------------------------------------------------------------

MAGIC = b"TDRF"
FORMAT_VERSION = 1
_HEAD = struct.Struct("<4sHIIQBIBII")


def _node_dtype(n_classes):
    return np.dtype([("feature", "<i4"), ("threshold", "<f8"), ("left", "<i4"), ("right", "<i4"),
                     ("weight", "<f8"), ("gain", "<f8"), ("value", "<f8", (n_classes,))])


def _encode_rule(rule) -> bytes:
    text = "none" if rule is None else (rule if isinstance(rule, str) else repr(rule))
    raw = text.encode("ascii")
    return struct.pack("<H", len(raw)) + raw


def _decode_rule(text: str):
    if text == "none":
        return None
    if text in ("sqrt", "log2"):
        return text
    return float(text) if "." in text or "e" in text else int(text)


def save_forest(model: ForestModel) -> bytes:
    """Versioned little-endian binary: header, config, class table, preorder nodes."""
    cfg = model.config
    out = [_HEAD.pack(MAGIC, FORMAT_VERSION, cfg.n_estimators, cfg.max_depth, cfg.random_state,
                      CLASS_WEIGHTS.index(cfg.class_weight), cfg.min_samples_leaf,
                      int(cfg.bootstrap), model.n_features, len(model.classes)),
           _encode_rule(cfg.features_per_split),
           np.asarray(model.classes, dtype="<i8").tobytes()]
    dtype = _node_dtype(len(model.classes))
    for tree in model.trees:
        rec = np.zeros(len(tree), dtype=dtype)
        for name in ("feature", "threshold", "left", "right", "weight", "gain", "value"):
            rec[name] = getattr(tree, name)
        out.append(struct.pack("<I", len(tree)))
        out.append(rec.tobytes())
    return b"".join(out)


def load_forest(data: bytes) -> ForestModel:
    data = bytes(data)
    if len(data) < _HEAD.size or data[:4] != MAGIC:
        raise FormatError("not a forest model file (bad magic)")
    (_, version, n_est, depth, seed, cw, msl, boot, n_features,
     n_classes) = _HEAD.unpack_from(data, 0)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported forest format version {version}")
    try:
        pos = _HEAD.size
        (rlen,) = struct.unpack_from("<H", data, pos)
        rule = _decode_rule(data[pos + 2:pos + 2 + rlen].decode("ascii"))
        pos += 2 + rlen
        classes = np.frombuffer(data, "<i8", n_classes, pos).astype(np.int64)
        pos += 8 * n_classes
        dtype = _node_dtype(n_classes)
        trees = []
        for _ in range(n_est):
            (count,) = struct.unpack_from("<I", data, pos)
            pos += 4
            rec = np.frombuffer(data, dtype, count, pos)
            pos += count * dtype.itemsize
            trees.append(DecisionTree(
                rec["feature"].astype(np.int64), rec["threshold"].astype(np.float64),
                rec["left"].astype(np.int64), rec["right"].astype(np.int64),
                rec["value"].astype(np.float64), rec["weight"].astype(np.float64),
                rec["gain"].astype(np.float64)))
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        raise FormatError(f"truncated or corrupt forest model: {exc}") from None
    if pos != len(data):
        raise FormatError(f"{len(data) - pos} trailing bytes after the last tree")
    config = RfConfig(n_est, depth, seed, CLASS_WEIGHTS[cw], rule, msl, bool(boot))
    return ForestModel(trees, config, classes, n_features)


# -- scikit-learn estimator ---------------------------------------------------

class DecayForestClassifier(ClassifierMixin, BaseEstimator):
    """scikit-learn compatible wrapper around :func:`fit_forest`."""

    def __init__(self, n_estimators=800, max_depth=64, random_state=42, class_weight="balanced",
                 features_per_split="sqrt", min_samples_leaf=1, bootstrap=True, n_jobs=1):
        self.n_estimators = n_estimators
        self.max_depth = max_depth
        self.random_state = random_state
        self.class_weight = class_weight
        self.features_per_split = features_per_split
        self.min_samples_leaf = min_samples_leaf
        self.bootstrap = bootstrap
        self.n_jobs = n_jobs

    def _config(self) -> RfConfig:
        return RfConfig(self.n_estimators, self.max_depth, self.random_state, self.class_weight,
                        self.features_per_split, self.min_samples_leaf, self.bootstrap)

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.model_ = fit_forest(X, y, self._config(), n_jobs=self.n_jobs)
        self.classes_ = self.model_.classes
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        return predict_proba(self.model_, check_array(X, dtype=np.float64))

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]

    @property
    def feature_importances_(self):
        check_is_fitted(self, "model_")
        return feature_importance(self.model_)


def config_dict(config: RfConfig) -> dict:
    return asdict(config)
