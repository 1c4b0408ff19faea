import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from treedecay.cloud import PointCloud
from treedecay.errors import EmptyCloudError
from treedecay.evaluation import (AugmentConfig, augment, cohens_kappa, confusion_matrix,
                                  crossval_run, f1_per_class, kfold_split, overall_accuracy)
from treedecay.forest import RfConfig


# -- metrics ------------------------------------------------------------------

def test_confusion_matrix_hand_count():
    cm = confusion_matrix([1, 1, 2, 2], [1, 2, 2, 2], k=2)
    np.testing.assert_array_equal(cm, [[1, 1], [0, 2]])
    np.testing.assert_array_equal(confusion_matrix([1, 2, 3], [1, 2, 3], k=3), np.eye(3))
    assert confusion_matrix([], [], k=2).sum() == 0
    with pytest.raises(ValueError):
        confusion_matrix([1, 2], [1], k=2)
    with pytest.raises(ValueError):
        confusion_matrix([1, 3], [1, 1], k=2)


def test_overall_accuracy_examples():
    assert overall_accuracy(np.eye(3) * 4) == 1.0
    assert overall_accuracy([[45, 5], [5, 45]]) == pytest.approx(0.9)
    assert overall_accuracy([[0, 3], [4, 0]]) == 0.0
    with pytest.raises(ValueError):
        overall_accuracy(np.zeros((2, 2)))


def test_binary_accuracy_matches_tp_tn_form():
    tp, fn, fp, tn = 30, 7, 4, 59
    assert overall_accuracy([[tp, fn], [fp, tn]]) == pytest.approx((tp + tn) / (tp + tn + fp + fn))


def test_f1_examples():
    np.testing.assert_allclose(f1_per_class(np.eye(4) * 3), 1.0)
    # class 0: TP 8, FP 2, FN 4
    cm = np.array([[8, 4, 0], [2, 10, 0], [0, 0, 0]])
    f1 = f1_per_class(cm)
    assert f1[0] == pytest.approx(0.7273, abs=1e-4)
    p, r = 0.8, 8 / 12
    assert f1[0] == pytest.approx(2 * p * r / (p + r))
    assert f1[2] == 0.0


def test_kappa_examples():
    assert cohens_kappa([[45, 5], [5, 45]]) == pytest.approx(0.8)
    assert cohens_kappa(np.diag([3, 5, 2])) == pytest.approx(1.0)
    assert cohens_kappa([[25, 25], [25, 25]]) == pytest.approx(0.0)
    with pytest.raises(ValueError):
        cohens_kappa([[10, 0], [0, 0]])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 4), st.integers(1, 4)), min_size=1, max_size=60))
def test_metric_identities(pairs):
    truth, pred = zip(*pairs)
    cm = confusion_matrix(truth, pred, k=4)
    assert cm.sum() == len(pairs)
    oa = overall_accuracy(cm)
    assert oa == pytest.approx(np.mean(np.array(truth) == np.array(pred)))
    f1 = f1_per_class(cm)
    assert ((f1 >= 0) & (f1 <= 1)).all()
    n = cm.sum()
    p_c = (cm.sum(0) * cm.sum(1)).sum() / n ** 2
    if p_c < 1:
        assert cohens_kappa(cm) == pytest.approx((oa - p_c) / (1 - p_c))
        assert cohens_kappa(cm) <= 1 + 1e-12


# -- folds --------------------------------------------------------------------

def test_ten_groups_two_classes_five_folds():
    groups = np.repeat(np.arange(10), 4)
    labels = np.repeat([1] * 5 + [2] * 5, 4)
    folds = kfold_split(labels, groups, k=5, seed=3)
    for f in folds:
        assert len(f) == 8
        assert sorted(set(labels[f])) == [1, 2]
        assert len(set(groups[f])) == 2


def test_fold_errors_and_determinism():
    with pytest.raises(ValueError, match="fewer than k"):
        kfold_split([1, 1, 2, 2, 2], [0, 0, 1, 2, 3], k=2)
    with pytest.raises(ValueError, match="mixes"):
        kfold_split([1, 2], [0, 0], k=2)
    labels = np.repeat([1, 2, 3], 20)
    a = kfold_split(labels, k=5, seed=11)
    b = kfold_split(labels, k=5, seed=11)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(1, 4), min_size=20, max_size=80), st.integers(2, 5),
       st.integers(0, 2 ** 32), st.integers(1, 4))
def test_fold_properties(group_labels, k, seed, views):
    group_labels = np.array(group_labels)
    if min(np.bincount(group_labels)[np.unique(group_labels)]) < k:
        return
    groups = np.repeat(np.arange(len(group_labels)), views)
    labels = np.repeat(group_labels, views)
    folds = kfold_split(labels, groups, k=k, seed=seed)
    allidx = np.sort(np.concatenate(folds))
    np.testing.assert_array_equal(allidx, np.arange(len(labels)))
    owner = np.empty(len(labels), int)
    for i, f in enumerate(folds):
        owner[f] = i
    for g in range(len(group_labels)):
        assert len(set(owner[groups == g])) == 1
    for lab in np.unique(group_labels):
        per_fold = [len(set(groups[f][labels[f] == lab])) for f in folds]
        assert max(per_fold) - min(per_fold) <= 1


def test_non_atomic_split_ignores_groups():
    labels = np.repeat([1, 2], 10)
    groups = np.repeat([0, 1], 10)
    folds = kfold_split(labels, groups, k=5, seed=0, group_atomic=False)
    assert all(len(f) == 4 for f in folds)


# -- augmentation ---------------------------------------------------------------

def tree_cloud(n=500, seed=0):
    rng = np.random.default_rng(seed)
    return PointCloud(rng.normal(0, 1, (n, 3)) + [10, 20, 5], rng.uniform(0, 1, n),
                      rng.uniform(0, 1, (n, 3)))


def test_augment_identity_when_disabled():
    cloud = tree_cloud()
    out = augment(cloud, AugmentConfig(rotation=False, removal_fraction=0, jitter_sigma=0))
    assert out.equals(cloud)


def test_augment_rotation_is_rigid():
    cloud = tree_cloud(200)
    out = augment(cloud, AugmentConfig(rotation=True, removal_fraction=0, jitter_sigma=0, seed=4))
    assert len(out) == len(cloud)
    d0 = np.linalg.norm(cloud.xyz[:, None] - cloud.xyz[None], axis=2)
    d1 = np.linalg.norm(out.xyz[:, None] - out.xyz[None], axis=2)
    np.testing.assert_allclose(d1, d0, atol=1e-9)
    np.testing.assert_array_equal(out.z, cloud.z)
    np.testing.assert_array_equal(out.channels, cloud.channels)


def test_augment_removal_binomial_bound():
    cloud = tree_cloud(10_000)
    out = augment(cloud, AugmentConfig(rotation=False, removal_fraction=0.5, jitter_sigma=0))
    removed = len(cloud) - len(out)
    assert abs(removed - 5000) <= 5 * np.sqrt(10_000 * 0.25)


def test_augment_jitter_scale_and_determinism():
    cloud = tree_cloud(5000)
    cfg = AugmentConfig(rotation=False, removal_fraction=0, jitter_sigma=0.02, seed=8)
    out = augment(cloud, cfg)
    assert np.std(out.xyz - cloud.xyz) == pytest.approx(0.02, rel=0.05)
    assert augment(cloud, cfg).equals(out)
    assert not augment(cloud, AugmentConfig(seed=9)).equals(augment(cloud, AugmentConfig(seed=8)))


def test_augment_errors():
    with pytest.raises(EmptyCloudError):
        augment(PointCloud.empty())
    with pytest.raises(ValueError):
        AugmentConfig(removal_fraction=1.0)
    with pytest.raises(ValueError):
        AugmentConfig(jitter_sigma=-1)
    # a single point with p close to 1 is removed on both attempts for some seed
    single = PointCloud([[0.0, 0.0, 1.0]])
    cfg = AugmentConfig(removal_fraction=0.999, seed=0)
    with pytest.raises(EmptyCloudError):
        augment(single, cfg)


# -- cross-validation -----------------------------------------------------------------

def separable(n_groups=40, views=4, seed=0):
    rng = np.random.default_rng(seed)
    glab = np.tile([1, 2, 3, 4], n_groups // 4)
    labels = np.repeat(glab, views)
    groups = np.repeat(np.arange(n_groups), views)
    X = rng.normal(0, 0.3, (len(labels), 5)) + np.eye(5)[labels][:, :5] * 3
    return X, labels, groups


def test_crossval_result_table():
    X, labels, groups = separable()
    res = crossval_run(X, labels, groups, k=5, config=RfConfig(n_estimators=15))
    assert res.oa.shape == (5,) and res.f1.shape == (5, 4)
    assert res.mean_oa > 0.95 and res.mean_kappa > 0.9
    rows = res.to_csv().splitlines()
    assert rows[0] == "iteration,oa,kappa,f1_level1,f1_level2,f1_level3,f1_level4"
    assert rows[-1].startswith("average,") and len(rows) == 7
    assert res.confusion.sum() == len(labels)


def test_crossval_never_augments_held_out_trees(monkeypatch):
    import treedecay.evaluation as ev

    X, labels, groups = separable()
    # augmented rows are tagged by an offset that identifies their group
    Xa = X + 1000.0 * (groups[:, None] + 1)
    seen = []
    real_fit = ev.fit_forest

    def spy(Xt, yt, config, n_jobs=1):
        seen.append(Xt)
        return real_fit(Xt, yt, config, n_jobs=n_jobs)

    monkeypatch.setattr(ev, "fit_forest", spy)
    folds = kfold_split(labels, groups, k=5, seed=0)
    crossval_run(X, labels, groups, k=5, config=RfConfig(n_estimators=3),
                 augmented=(Xa, labels, groups))
    for Xt, test in zip(seen, folds):
        aug_groups = set((np.round(Xt[Xt[:, 0] > 500, 0] / 1000.0) - 1).astype(int))
        assert aug_groups == set(groups) - set(groups[test])
        assert len(Xt) == 2 * (len(X) - len(test))
