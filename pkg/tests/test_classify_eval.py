import json
import warnings

import numpy as np
import pytest
from sklearn.metrics import f1_score, matthews_corrcoef
from sklearn.neighbors import KNeighborsClassifier

from elastic_embed.classify_eval import (
    ClassifierConfig,
    LabeledEmbedding,
    ReducerConfig,
    confusion_matrix,
    cross_validate,
    evaluate,
    f1_per_class,
    knn_classify,
    mcc,
    random_forest_fit,
    random_forest_predict,
    stratified_kfold,
)
from elastic_embed.distmat import DistanceMatrix
from elastic_embed.embedding import Embedding
from elastic_embed.seeding import derive_seed


def blobs(rng, per=25, sigma=0.1):
    centers = np.array([[0, 0], [1, 0], [0, 1], [1, 1]], dtype=float)
    X = np.vstack([c + sigma * rng.normal(size=(per, 2)) for c in centers])
    y = [f"c{i}" for i in range(4) for _ in range(per)]
    return X, y


def pdist(X):
    return np.sqrt(((X[:, None] - X[None]) ** 2).sum(-1))


# ---------------------------------------------------------------------------
# kNN


def test_knn_coincident_point(rng):
    X = rng.normal(size=(10, 2))
    y = list("ababababab")
    assert knn_classify(LabeledEmbedding(X, y), X[3], k=1) == ["b"]


def test_knn_majority():
    X = np.array([[0.0, 0.0], [0.1, 0.0], [0.2, 0.0], [5.0, 5.0]])
    train = LabeledEmbedding(X, ["A", "A", "B", "B"])
    assert knn_classify(train, [[0.05, 0.0]], k=3) == ["A"]


def test_knn_tie_by_summed_distance():
    X = np.array([[0.0, 0.0], [1.0, 0.0]])
    train = LabeledEmbedding(X, ["A", "B"])
    assert knn_classify(train, [[0.9, 0.0]], k=2) == ["B"]
    assert knn_classify(train, [[0.1, 0.0]], k=2) == ["A"]
    # equal votes and equal summed distance: smallest class wins
    assert knn_classify(train, [[0.5, 0.0]], k=2) == ["A"]


def test_knn_matches_sklearn_on_odd_k(rng):
    X, y = blobs(rng, sigma=0.4)
    test = rng.uniform(-0.5, 1.5, size=(60, 2))
    for k in (1, 3, 5, 7):
        ref = KNeighborsClassifier(n_neighbors=k).fit(X, y).predict(test)
        ours = knn_classify(LabeledEmbedding(X, y), test, k=k)
        # with 4 classes odd k can still tie; compare where the vote is strict
        D = pdist(np.vstack([test, X]))[: len(test), len(test) :]
        for i in range(len(test)):
            nn = np.argsort(D[i], kind="stable")[:k]
            counts = np.unique(np.array(y)[nn], return_counts=True)[1]
            if np.sum(counts == counts.max()) == 1:
                assert ours[i] == ref[i]


def test_knn_bad_k(rng):
    train = LabeledEmbedding(rng.normal(size=(4, 2)), list("abab"))
    with pytest.raises(ValueError):
        knn_classify(train, [[0, 0]], k=5)
    with pytest.raises(ValueError):
        knn_classify(train, [[0, 0]], k=0)


# ---------------------------------------------------------------------------
# random forest


def test_rf_separable_training_accuracy(rng):
    X = np.vstack([rng.normal(size=(30, 2)) - 3, rng.normal(size=(30, 2)) + 3])
    y = ["a"] * 30 + ["b"] * 30
    model = random_forest_fit(LabeledEmbedding(X, y), n_trees=50, seed=0)
    assert random_forest_predict(model, X) == y


def test_rf_determinism(rng):
    X, y = blobs(rng, sigma=0.3)
    test = rng.uniform(-0.5, 1.5, size=(40, 2))
    a = random_forest_predict(random_forest_fit(LabeledEmbedding(X, y), 20, seed=5), test)
    b = random_forest_predict(random_forest_fit(LabeledEmbedding(X, y), 20, seed=5), test)
    assert a == b


def test_rf_single_class(rng):
    model = random_forest_fit(LabeledEmbedding(rng.normal(size=(5, 2)), ["z"] * 5), 10)
    assert random_forest_predict(model, rng.normal(size=(3, 2))) == ["z"] * 3


def test_rf_blobs_cv(rng):
    X, y = blobs(rng)
    per_fold, C = cross_validate(LabeledEmbedding(X, y), ClassifierConfig("rf", n_trees=100), 5, 0, 0)
    assert f1_per_class(C).mean() > 0.95
    assert len(per_fold) == 5


def test_rf_feature_subsampling_high_dim(rng):
    # only the first of 9 features carries the label
    X = rng.normal(size=(80, 9))
    y = np.where(X[:, 0] > 0, "pos", "neg").tolist()
    model = random_forest_fit(LabeledEmbedding(X, y), 60, seed=1)
    test = rng.normal(size=(200, 9))
    pred = random_forest_predict(model, test)
    truth = np.where(test[:, 0] > 0, "pos", "neg")
    assert np.mean(np.array(pred) == truth) > 0.85


# ---------------------------------------------------------------------------
# folds


def test_kfold_two_classes_of_five():
    folds = stratified_kfold(list("aaaaabbbbb"), 5, seed=3)
    for f in range(5):
        members = np.flatnonzero(folds == f)
        assert sorted(np.array(list("aaaaabbbbb"))[members]) == ["a", "b"]


def test_kfold_partition_and_balance(rng):
    labels = list(rng.choice(list("abcd"), size=97))
    labels += list("abcd") * 5
    folds = stratified_kfold(labels, 5, seed=1)
    sizes = np.bincount(folds, minlength=5)
    assert sizes.sum() == len(labels) and sizes.max() - sizes.min() <= 1
    lab = np.array(labels)
    for c in "abcd":
        share = np.sum(lab == c) / 5
        for f in range(5):
            assert abs(np.sum((folds == f) & (lab == c)) - share) <= 1


def test_kfold_reproducible():
    labels = list("aaabbbcccdddeee") * 2
    assert np.array_equal(stratified_kfold(labels, 3, 9), stratified_kfold(labels, 3, 9))
    with pytest.raises(ValueError):
        stratified_kfold(list("aab"), 3, 0)


# ---------------------------------------------------------------------------
# metrics


def test_metric_examples():
    assert mcc([[1, 1], [1, 1]]) == 0.0
    assert f1_per_class([[1, 1], [1, 1]])[0] == 0.5
    C = np.array([[4, 1], [2, 3]])
    assert mcc(C) == pytest.approx((4 * 3 - 1 * 2) / np.sqrt(5 * 6 * 5 * 4), abs=1e-12)
    assert mcc(C) == pytest.approx(0.40825, abs=1e-5)
    assert f1_per_class(C)[0] == pytest.approx(8 / 11, abs=1e-12)


def test_perfect_classifier():
    C = np.diag([3, 4, 5])
    assert mcc(C) == 1.0 and f1_per_class(C).mean() == 1.0


def test_metrics_match_sklearn(rng):
    classes = ["a", "b", "c", "d"]
    for _ in range(20):
        true = rng.choice(classes, 60)
        pred = np.where(rng.uniform(size=60) < 0.6, true, rng.choice(classes, 60))
        C = confusion_matrix(true, pred, classes)
        assert mcc(C) == pytest.approx(matthews_corrcoef(true, pred), abs=1e-12)
        ref = f1_score(true, pred, labels=classes, average=None, zero_division=0)
        np.testing.assert_allclose(f1_per_class(C), ref, atol=1e-12)


def test_mcc_one_iff_diagonal(rng):
    for _ in range(50):
        C = rng.integers(0, 5, size=(3, 3))
        if C.sum() == 0:
            continue
        diagonal = not (C - np.diag(np.diag(C))).any()
        assert (mcc(C) == 1.0) == diagonal
        assert -1.0 <= mcc(C) <= 1.0


def test_f1_zero_division_warns():
    with pytest.warns(RuntimeWarning):
        f1 = f1_per_class([[2, 0, 0], [0, 3, 0], [0, 0, 0]])
    assert f1[2] == 0.0


def test_macro_f1_relabeling_invariant(rng):
    classes = ["a", "b", "c"]
    true = rng.choice(classes, 50)
    pred = np.where(rng.uniform(size=50) < 0.7, true, rng.choice(classes, 50))
    f1 = f1_per_class(confusion_matrix(true, pred, classes))
    perm = {"a": "c", "b": "a", "c": "b"}
    t2 = [perm[x] for x in true]
    p2 = [perm[x] for x in pred]
    f2 = f1_per_class(confusion_matrix(t2, p2, classes))
    assert f1.mean() == pytest.approx(f2.mean(), abs=1e-12)
    for c in classes:
        assert f1[classes.index(c)] == f2[classes.index(perm[c])]


# ---------------------------------------------------------------------------
# evaluate


def test_evaluate_with_perfect_embedding(rng, tmp_path):
    X, y = blobs(rng, per=20, sigma=0.01)
    m = DistanceMatrix(pdist(X), "euclidean", y)
    emb = Embedding(X, 0, "given")
    rep = evaluate(m, classifier=ClassifierConfig("knn", k=3), embedding=emb, seed=4)
    assert rep.macro_f1 == 1.0 and rep.mcc == 1.0
    assert rep.macro_f1 == pytest.approx(np.mean(rep.per_class_f1), abs=1e-12)
    assert len(rep.per_fold) == 5 and rep.config["seed"] == 4
    assert rep.config["sub_seeds"]["folds"] == derive_seed(4, "folds")
    rep.write_json(tmp_path / "r.json")
    rep.write_confusion_csv(tmp_path / "c.csv")
    assert json.loads((tmp_path / "r.json").read_text())["macro_f1"] == 1.0
    assert (tmp_path / "c.csv").read_text().splitlines()[0] == "true\\pred,c0,c1,c2,c3"


@pytest.mark.parametrize("kind", ["umap", "tsne", "etsne"])
def test_evaluate_runs_reducers(rng, kind):
    X, y = blobs(rng, per=10, sigma=0.05)
    m = DistanceMatrix(pdist(X), "euclidean", y)
    red = ReducerConfig(kind=kind, perplexity=8, k_neighbors=5, n_epochs=100)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        rep = evaluate(m, red, ClassifierConfig("knn", k=3), k_folds=5, seed=0)
    assert 0.0 <= rep.macro_f1 <= 1.0 and -1.0 <= rep.mcc <= 1.0
    again = evaluate(m, red, ClassifierConfig("knn", k=3), k_folds=5, seed=0)
    assert again.to_dict() == rep.to_dict()


def test_evaluate_needs_labels(rng):
    X, _ = blobs(rng, per=5)
    with pytest.raises(ValueError):
        evaluate(DistanceMatrix(pdist(X), "euclidean"))


def test_config_validation():
    with pytest.raises(ValueError):
        ReducerConfig(kind="pca")
    with pytest.raises(ValueError):
        ClassifierConfig(kind="svm")
