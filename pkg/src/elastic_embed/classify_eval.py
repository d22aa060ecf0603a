"""Classifiers on embedding coordinates (kNN and a CART random forest),
stratified k-fold cross-validation, and per-class F1, macro F1 and
multiclass MCC.

Evaluation is transductive: the embedding is fit once on all points and only
the classifier is cross-validated, since neither reducer can place unseen
points.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .distmat import DistanceMatrix
from .embed_tsne import TsneParams, etsne_embed, perplexity_calibrate, tsne_embed
from .embed_umap import UmapParams, smooth_knn, umap_embed
from .embedding import Embedding
from .seeding import derive_seed

__all__ = [
    "LabeledEmbedding",
    "ReducerConfig",
    "ClassifierConfig",
    "EvalReport",
    "knn_classify",
    "RandomForest",
    "random_forest_fit",
    "random_forest_predict",
    "stratified_kfold",
    "confusion_matrix",
    "f1_per_class",
    "mcc",
    "run_reducer",
    "cross_validate",
    "evaluate",
]


@dataclass(frozen=True, eq=False)
class LabeledEmbedding:
    Y: NDArray[np.float64]
    labels: list[str]

    def __post_init__(self) -> None:
        Y = np.asarray(self.Y, dtype=np.float64)
        if Y.ndim != 2 or Y.shape[0] != len(self.labels):
            raise ValueError("label count mismatch")
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "labels", [str(x) for x in self.labels])

    @property
    def classes(self) -> list[str]:
        return sorted(set(self.labels))


# ---------------------------------------------------------------------------
# kNN


def _encode(labels: Sequence, classes: Sequence) -> NDArray[np.int64]:
    index = {c: i for i, c in enumerate(classes)}
    return np.array([index[x] for x in labels], dtype=np.int64)


def knn_classify(train: LabeledEmbedding, test_points: ArrayLike, k: int = 5) -> list[str]:
    """Majority vote of the ``k`` nearest training points (Euclidean).

    Ties go to the class with the smallest summed distance among its voters,
    then to the smallest class in sorted order.
    """
    if not 1 <= k <= len(train.labels):
        raise ValueError(f"k must be in [1, {len(train.labels)}], got {k}")
    X = np.atleast_2d(np.asarray(test_points, dtype=np.float64))
    classes = train.classes
    y = _encode(train.labels, classes)
    D = np.sqrt(np.maximum(np.sum((X[:, None, :] - train.Y[None, :, :]) ** 2, axis=-1), 0.0))
    out = []
    for row in D:
        nn = np.argsort(row, kind="stable")[:k]
        votes = np.bincount(y[nn], minlength=len(classes))
        dsum = np.bincount(y[nn], weights=row[nn], minlength=len(classes))
        tied = np.flatnonzero(votes == votes.max())
        best = min(tied, key=lambda c: (dsum[c], c))
        out.append(classes[best])
    return out


# ---------------------------------------------------------------------------
# random forest


@dataclass
class _Node:
    feature: int = -1
    threshold: float = 0.0
    left: int = -1
    right: int = -1
    counts: NDArray | None = None


def _gini_split(x: NDArray, y: NDArray, n_classes: int) -> tuple[float, float]:
    """Best ``(weighted impurity, threshold)`` for one feature, or inf."""
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]
    n = xs.size
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), ys] = 1.0
    left = np.cumsum(onehot, axis=0)[:-1]
    right = left[-1] + onehot[-1] - left
    nl = np.arange(1, n, dtype=np.float64)
    nr = n - nl
    gini_l = 1.0 - np.sum((left / nl[:, None]) ** 2, axis=1)
    gini_r = 1.0 - np.sum((right / nr[:, None]) ** 2, axis=1)
    score = (nl * gini_l + nr * gini_r) / n
    valid = xs[1:] > xs[:-1]
    if not np.any(valid):
        return math.inf, 0.0
    score = np.where(valid, score, np.inf)
    i = int(np.argmin(score))
    return float(score[i]), float(0.5 * (xs[i] + xs[i + 1]))


def _grow(X: NDArray, y: NDArray, n_classes: int, n_feat: int, rng: np.random.Generator) -> list[_Node]:
    nodes: list[_Node] = []
    stack = [(np.arange(X.shape[0]), -1, False)]
    while stack:
        idx, parent, is_right = stack.pop()
        node_id = len(nodes)
        counts = np.bincount(y[idx], minlength=n_classes)
        node = _Node(counts=counts)
        nodes.append(node)
        if parent >= 0:
            if is_right:
                nodes[parent].right = node_id
            else:
                nodes[parent].left = node_id
        if np.count_nonzero(counts) <= 1 or idx.size < 2:
            continue
        feats = rng.permutation(X.shape[1])
        best = (math.inf, -1, 0.0)
        # the sampled subset first; the rest only if no sampled feature varies
        for group in (feats[:n_feat], feats[n_feat:]):
            for f in group:
                score, thr = _gini_split(X[idx, f], y[idx], n_classes)
                if score < best[0]:
                    best = (score, int(f), thr)
            if best[1] >= 0:
                break
        if best[1] < 0:
            continue
        node.feature, node.threshold = best[1], best[2]
        go_left = X[idx, node.feature] <= node.threshold
        stack.append((idx[~go_left], node_id, True))
        stack.append((idx[go_left], node_id, False))
    return nodes


def _tree_predict(nodes: list[_Node], x: NDArray) -> int:
    node = nodes[0]
    while node.feature >= 0:
        node = nodes[node.left] if x[node.feature] <= node.threshold else nodes[node.right]
    return int(np.argmax(node.counts))


@dataclass
class RandomForest:
    classes: list[str]
    trees: list[list[_Node]] = field(default_factory=list)
    seed: int = 0


def random_forest_fit(train: LabeledEmbedding, n_trees: int = 100, seed: int = 0) -> RandomForest:
    """Bagged CART trees with Gini splits over ``ceil(sqrt(d))`` random
    features per node, grown to purity. Tree ``t`` draws from a generator
    seeded with ``seed + t``."""
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    classes = train.classes
    y = _encode(train.labels, classes)
    X = train.Y
    n, d = X.shape
    n_feat = math.ceil(math.sqrt(d))
    model = RandomForest(classes, seed=seed)
    if len(classes) == 1:
        return model
    for t in range(n_trees):
        rng = np.random.default_rng(seed + t)
        boot = rng.integers(0, n, n)
        model.trees.append(_grow(X[boot], y[boot], len(classes), n_feat, rng))
    return model


def random_forest_predict(model: RandomForest, points: ArrayLike) -> list[str]:
    X = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if not model.trees:
        return [model.classes[0]] * X.shape[0]
    out = []
    for x in X:
        votes = np.bincount([_tree_predict(tree, x) for tree in model.trees], minlength=len(model.classes))
        out.append(model.classes[int(np.argmax(votes))])
    return out


# ---------------------------------------------------------------------------
# cross-validation and metrics


def stratified_kfold(labels: Sequence, k_folds: int = 5, seed: int = 0) -> NDArray[np.int64]:
    """Fold index per sample.

    Each class's members are shuffled, classes are laid end to end in sorted
    order, and position ``p`` goes to fold ``p mod k_folds``.
    """
    labels = [str(x) for x in labels]
    if k_folds < 2:
        raise ValueError("k_folds must be >= 2")
    rng = np.random.default_rng(seed)
    folds = np.empty(len(labels), dtype=np.int64)
    pos = 0
    for c in sorted(set(labels)):
        members = np.flatnonzero(np.array(labels) == c)
        if members.size < k_folds:
            raise ValueError(f"class {c!r} has {members.size} members, fewer than k_folds={k_folds}")
        members = rng.permutation(members)
        folds[members] = (pos + np.arange(members.size)) % k_folds
        pos += members.size
    return folds


def confusion_matrix(true: Sequence, pred: Sequence, classes: Sequence) -> NDArray[np.int64]:
    """Counts with rows indexed by true class and columns by prediction."""
    C = np.zeros((len(classes), len(classes)), dtype=np.int64)
    np.add.at(C, (_encode(true, classes), _encode(pred, classes)), 1)
    return C


def f1_per_class(C: ArrayLike) -> NDArray[np.float64]:
    """One-vs-rest F1. A class with no true and no predicted members scores 0."""
    C = np.asarray(C, dtype=np.float64)
    tp = np.diag(C)
    denom = C.sum(axis=0) + C.sum(axis=1)
    f1 = np.zeros(C.shape[0])
    ok = denom > 0
    f1[ok] = 2.0 * tp[ok] / denom[ok]
    if not np.all(ok):
        warnings.warn("F1 undefined for a class with no true or predicted members; set to 0", RuntimeWarning, stacklevel=2)
    return f1


def mcc(C: ArrayLike) -> float:
    """Multiclass Matthews correlation from the full confusion matrix."""
    C = np.asarray(C, dtype=np.float64)
    s = C.sum()
    c = np.trace(C)
    t = C.sum(axis=1)
    p = C.sum(axis=0)
    # one square root of the product keeps a diagonal matrix at exactly 1
    denom = math.sqrt(max(s * s - p @ p, 0.0) * max(s * s - t @ t, 0.0))
    if denom == 0.0:
        off = C - np.diag(np.diag(C))
        return 1.0 if s > 0 and not off.any() else 0.0
    return float(np.clip((c * s - t @ p) / denom, -1.0, 1.0))


# ---------------------------------------------------------------------------
# pipeline


@dataclass(frozen=True)
class ReducerConfig:
    kind: str = "umap"
    d: int = 2
    perplexity: float = 30.0
    k_neighbors: int = 15
    tsne: TsneParams = field(default_factory=TsneParams)
    n_epochs: int = 500

    def __post_init__(self) -> None:
        if self.kind not in ("tsne", "etsne", "umap"):
            raise ValueError(f"unknown reducer {self.kind!r}")


@dataclass(frozen=True)
class ClassifierConfig:
    kind: str = "knn"
    k: int = 5
    n_trees: int = 100

    def __post_init__(self) -> None:
        if self.kind not in ("knn", "rf"):
            raise ValueError(f"unknown classifier {self.kind!r}")


def run_reducer(m: DistanceMatrix, config: ReducerConfig, seed: int) -> Embedding:
    if config.kind == "umap":
        params = UmapParams(k=config.k_neighbors, d=config.d, n_epochs=config.n_epochs, seed=seed)
        return umap_embed(smooth_knn(m, config.k_neighbors), params, m)
    aff = perplexity_calibrate(m, config.perplexity)
    fn = tsne_embed if config.kind == "tsne" else etsne_embed
    return fn(aff, config.d, config.tsne, seed)


@dataclass
class EvalReport:
    classes: list[str]
    per_class_f1: list[float]
    per_class_f1_sd: list[float]
    macro_f1: float
    mcc: float
    per_fold: list[dict[str, Any]]
    confusion: list[list[int]]
    config: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    def write_confusion_csv(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            fh.write(",".join(["true\\pred"] + self.classes) + "\n")
            for c, row in zip(self.classes, self.confusion):
                fh.write(",".join([c] + [str(v) for v in row]) + "\n")


def cross_validate(
    data: LabeledEmbedding, classifier: ClassifierConfig, k_folds: int, fold_seed: int, model_seed: int
) -> tuple[list[dict[str, Any]], NDArray[np.int64]]:
    classes = data.classes
    folds = stratified_kfold(data.labels, k_folds, fold_seed)
    labels = np.array(data.labels)
    per_fold, total = [], np.zeros((len(classes), len(classes)), dtype=np.int64)
    for f in range(k_folds):
        test, train = folds == f, folds != f
        tr = LabeledEmbedding(data.Y[train], list(labels[train]))
        if classifier.kind == "knn":
            pred = knn_classify(tr, data.Y[test], min(classifier.k, int(train.sum())))
        else:
            pred = random_forest_predict(random_forest_fit(tr, classifier.n_trees, model_seed), data.Y[test])
        C = confusion_matrix(labels[test], pred, classes)
        f1 = f1_per_class(C)
        per_fold.append({"per_class_f1": f1.tolist(), "macro_f1": float(f1.mean()), "mcc": mcc(C), "n_test": int(test.sum())})
        total += C
    return per_fold, total


def evaluate(
    m: DistanceMatrix,
    reducer: ReducerConfig | None = None,
    classifier: ClassifierConfig | None = None,
    k_folds: int = 5,
    seed: int = 0,
    *,
    embedding: Embedding | None = None,
) -> EvalReport:
    """Embed ``m`` once, then cross-validate the classifier on the
    coordinates. Sub-seeds for the reducer, folds and forest come from
    :func:`derive_seed`."""
    reducer = reducer or ReducerConfig()
    classifier = classifier or ClassifierConfig()
    if m.labels is None:
        raise ValueError("distance matrix has no labels")
    if embedding is None:
        embedding = run_reducer(m, reducer, derive_seed(seed, "reducer"))
    data = LabeledEmbedding(embedding.Y, m.labels)
    per_fold, total = cross_validate(data, classifier, k_folds, derive_seed(seed, "folds"), derive_seed(seed, "forest"))
    F = np.array([f["per_class_f1"] for f in per_fold])
    per_class = F.mean(axis=0)
    config = {
        "metric": m.metric_tag,
        "reducer": asdict(reducer),
        "classifier": asdict(classifier),
        "k_folds": k_folds,
        "seed": seed,
        "sub_seeds": {r: derive_seed(seed, r) for r in ("reducer", "folds", "forest")},
    }
    return EvalReport(
        classes=data.classes,
        per_class_f1=per_class.tolist(),
        per_class_f1_sd=F.std(axis=0).tolist(),
        macro_f1=float(per_class.mean()),
        mcc=float(np.mean([f["mcc"] for f in per_fold])),
        per_fold=per_fold,
        confusion=total.tolist(),
        config=config,
    )
