"""Gini decision trees and the ensembles built from them.

All models share one contract: ``predict(model, rows)`` returns label codes
drawn from ``model.classes``. Every vote tie resolves toward the lowest class
code, which puts Normal first.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset, make_rng

MODEL_FORMAT = "stuntkit-model/1"
EPS_FLOOR = 1e-10


@dataclass(frozen=True)
class TreeParams:
    max_depth: int | None = None
    min_samples_split: int = 2
    feature_subsample: str = "all"

    def __post_init__(self):
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be >= 2")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be non-negative or None")
        if self.feature_subsample not in ("all", "sqrt"):
            raise ValueError(f"feature_subsample must be 'all' or 'sqrt', got {self.feature_subsample!r}")


@dataclass
class Tree:
    """Flat node arrays; a node with feature -1 is a leaf predicting `value`."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def depth(self) -> int:
        depth = np.zeros(self.feature.shape[0], dtype=int)
        for node in range(self.feature.shape[0]):
            if self.feature[node] >= 0:
                depth[self.left[node]] = depth[self.right[node]] = depth[node] + 1
        return int(depth.max())

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.intp)
        rows = np.arange(X.shape[0])
        active = self.feature[node] >= 0
        while active.any():
            idx = rows[active]
            cur = node[idx]
            go_left = X[idx, self.feature[cur]] <= self.threshold[cur]
            node[idx] = np.where(go_left, self.left[cur], self.right[cur])
            active[idx] = self.feature[node[idx]] >= 0
        return self.value[node]


@dataclass
class FitReport:
    kind: str
    seed: int | None = None
    members: int = 0
    oob_available: bool = False
    train_error: list[float] = field(default_factory=list)
    round_error: list[float] = field(default_factory=list)
    alphas: list[float] = field(default_factory=list)
    weight_sums: list[float] = field(default_factory=list)
    discarded: list[int] = field(default_factory=list)
    bootstrap: list[np.ndarray] = field(default_factory=list)


@dataclass
class Model:
    kind: str
    classes: np.ndarray
    n_features: int
    members: list[Model] = field(default_factory=list)
    weights: np.ndarray = field(default_factory=lambda: np.empty(0))
    tree: Tree | None = None
    report: FitReport | None = None


def _best_split(X: np.ndarray, Yw: np.ndarray, features) -> tuple[float, int, float]:
    """Lowest weighted Gini split among `features`.

    Yw holds per-row class weights (one-hot times sample weight). Returns
    (impurity, feature, threshold); feature is -1 when no valid split exists.
    Rows with value <= threshold go left.
    """
    total = Yw.sum(axis=0)
    wsum = total.sum()
    best = (math.inf, -1, 0.0)
    for f in features:
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        valid = xs[1:] > xs[:-1]
        if not valid.any():
            continue
        left = np.cumsum(Yw[order], axis=0)[:-1]
        wl = left.sum(axis=1)
        wr = wsum - wl
        right = total - left
        with np.errstate(divide="ignore", invalid="ignore"):
            imp = (wl - (left * left).sum(axis=1) / wl) + (wr - (right * right).sum(axis=1) / wr)
        imp[~valid | (wl <= 0) | (wr <= 0)] = math.inf
        i = int(np.argmin(imp))
        if imp[i] < best[0]:
            lo, hi = xs[i], xs[i + 1]
            thr = lo + (hi - lo) / 2.0
            if not lo <= thr < hi:
                thr = lo
            best = (float(imp[i]), int(f), float(thr))
    return best


def grow_tree(X: np.ndarray, y: np.ndarray, w: np.ndarray, n_classes: int, params: TreeParams,
              rng: np.random.Generator) -> Tree:
    """CART on class indices `y` with sample weights `w` (zero-weight rows ignored)."""
    keep = w > 0
    X, y, w = X[keep], y[keep], w[keep]
    n, d = X.shape
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), y] = w
    n_try = max(1, int(math.isqrt(d))) if params.feature_subsample == "sqrt" else d
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(rows):
        weights = onehot[rows].sum(axis=0)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(int(np.argmax(weights)))
        return len(feature) - 1, weights

    root, root_w = new_node(np.arange(n))
    stack = [(root, np.arange(n), 0, root_w)]
    while stack:
        node, rows, depth, weights = stack.pop()
        if (np.count_nonzero(weights) <= 1 or rows.shape[0] < params.min_samples_split
                or (params.max_depth is not None and depth >= params.max_depth)):
            continue
        order = rng.permutation(d) if n_try < d else np.arange(d)
        _, f, thr = _best_split(X[rows], onehot[rows], order[:n_try])
        if f < 0 and n_try < d:
            _, f, thr = _best_split(X[rows], onehot[rows], order[n_try:])
        if f < 0:
            continue
        mask = X[rows, f] <= thr
        lrows, rrows = rows[mask], rows[~mask]
        lnode, lw = new_node(lrows)
        rnode, rw = new_node(rrows)
        feature[node], threshold[node], left[node], right[node] = f, thr, lnode, rnode
        stack.append((rnode, rrows, depth + 1, rw))
        stack.append((lnode, lrows, depth + 1, lw))
    return Tree(np.array(feature, dtype=np.intp), np.array(threshold), np.array(left, dtype=np.intp),
                np.array(right, dtype=np.intp), np.array(value, dtype=np.intp))


def _encode(train: Dataset, classes=None) -> tuple[np.ndarray, np.ndarray]:
    classes = np.array(sorted(set(train.labels.tolist())) if classes is None else classes, dtype=float)
    y = np.searchsorted(classes, train.labels)
    return classes, y


def _check_train(train: Dataset) -> None:
    if len(train) == 0:
        raise ValueError("cannot fit on an empty training set")


def fit_tree(train: Dataset, params: TreeParams = TreeParams(), rng: np.random.Generator | None = None,
             sample_weight=None) -> Model:
    """Fit a single CART tree; `sample_weight` defaults to uniform."""
    _check_train(train)
    rng = make_rng(0) if rng is None else rng
    classes, y = _encode(train)
    w = np.ones(len(train)) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    if w.shape != (len(train),) or np.any(w < 0) or w.sum() <= 0:
        raise ValueError("sample_weight must be non-negative with positive total, one per row")
    tree = grow_tree(train.features, y, w, len(classes), params, rng)
    return Model("tree", classes, train.n_features, tree=tree, report=FitReport("tree", members=1))


def _fit_resampled(kind: str, train: Dataset, n_members: int, params: TreeParams, rng: np.random.Generator,
                   bootstrap: bool) -> Model:
    _check_train(train)
    if n_members < 1:
        raise ValueError("ensemble needs at least one member")
    classes, y = _encode(train)
    n = len(train)
    seeds = rng.integers(0, 2**63 - 1, size=n_members)
    report = FitReport(kind, members=n_members, oob_available=bootstrap)
    members = []
    for seed in seeds:
        member_rng = make_rng(int(seed))
        if bootstrap:
            draws = member_rng.integers(0, n, size=n)
            report.bootstrap.append(draws)
            # duplicate draws become integer weights: same splits, fewer rows
            w = np.bincount(draws, minlength=n).astype(float)
        else:
            w = np.ones(n)
        tree = grow_tree(train.features, y, w, len(classes), params, member_rng)
        members.append(Model("tree", classes, train.n_features, tree=tree))
    return Model(kind, classes, train.n_features, members, np.ones(n_members), report=report)


def fit_forest(train: Dataset, n_trees: int = 100, params: TreeParams = TreeParams(feature_subsample="sqrt"),
               rng: np.random.Generator | None = None, bootstrap: bool = True) -> Model:
    """Random forest: bootstrap rows per tree, sqrt(d) candidate features per split."""
    rng = make_rng(0) if rng is None else rng
    return _fit_resampled("forest", train, n_trees, params, rng, bootstrap)


def fit_bagging(train: Dataset, n_members: int = 100, params: TreeParams = TreeParams(),
                rng: np.random.Generator | None = None, bootstrap: bool = True) -> Model:
    """Bagged trees: bootstrap rows only, every feature considered at each split."""
    rng = make_rng(0) if rng is None else rng
    if params.feature_subsample != "all":
        raise ValueError("bagging members consider all features")
    return _fit_resampled("bagging", train, n_members, params, rng, bootstrap)


def samme_alpha(eps: float, n_classes: int) -> float:
    """Member weight ln((1 - eps) / eps) + ln(K - 1), with eps floored at 1e-10."""
    eps = max(float(eps), EPS_FLOOR)
    return math.log((1.0 - eps) / eps) + math.log(n_classes - 1)


def fit_adaboost(train: Dataset, n_rounds: int = 50, stump_params: TreeParams = TreeParams(max_depth=1),
                 rng: np.random.Generator | None = None) -> Model:
    """Multiclass AdaBoost (SAMME).

    Rounds whose weighted error reaches 1 - 1/K are dropped and the sample
    weights reset to uniform. A perfect round ends training early.
    """
    _check_train(train)
    rng = make_rng(0) if rng is None else rng
    classes, y = _encode(train)
    K = len(classes)
    if K < 2:
        raise ValueError("AdaBoost needs at least two classes")
    n = len(train)
    w = np.full(n, 1.0 / n)
    scores = np.zeros((n, K))
    members, alphas = [], []
    report = FitReport("adaboost")
    for rnd in range(n_rounds):
        tree = grow_tree(train.features, y, w, K, stump_params, make_rng(int(rng.integers(0, 2**63 - 1))))
        pred = tree.apply(train.features)
        miss = pred != y
        eps = float(w[miss].sum() / w.sum())
        report.round_error.append(eps)
        if eps >= 1.0 - 1.0 / K:
            report.discarded.append(rnd)
            w = np.full(n, 1.0 / n)
            report.weight_sums.append(float(w.sum()))
            continue
        alpha = samme_alpha(eps, K)
        members.append(Model("tree", classes, train.n_features, tree=tree))
        alphas.append(alpha)
        w = w * np.exp(alpha * miss)
        w /= w.sum()
        scores[np.arange(n), pred] += alpha
        report.alphas.append(alpha)
        report.weight_sums.append(float(w.sum()))
        report.train_error.append(float(np.mean(np.argmax(scores, axis=1) != y)))
        if eps <= 0.0:
            break
    if not members:
        raise ValueError("every boosting round was discarded; the weak learner is no better than chance")
    report.members = len(members)
    return Model("adaboost", classes, train.n_features, members, np.array(alphas), report=report)


def fit_voting(members: list[Model], mode: str = "hard") -> Model:
    """Hard majority vote over already-trained models."""
    if mode != "hard":
        raise ValueError("only hard voting is supported")
    if len(members) < 2:
        raise ValueError("voting needs at least two members")
    classes = members[0].classes
    for m in members[1:]:
        if not np.array_equal(m.classes, classes) or m.n_features != members[0].n_features:
            raise ValueError("voting members were trained on different class sets or schemas")
    return Model("voting", classes, members[0].n_features, list(members), np.ones(len(members)),
                 report=FitReport("voting", members=len(members)))


def _predict_index(model: Model, X: np.ndarray) -> np.ndarray:
    if model.kind == "tree":
        return model.tree.apply(X)
    K = len(model.classes)
    scores = np.zeros((X.shape[0], K))
    rows = np.arange(X.shape[0])
    for member, weight in zip(model.members, model.weights):
        if member.kind == "tree" and np.array_equal(member.classes, model.classes):
            idx = member.tree.apply(X)
        else:
            idx = np.searchsorted(model.classes, predict(member, X))
        scores[rows, idx] += weight
    # argmax returns the first maximum: lowest class code on ties
    return np.argmax(scores, axis=1)


def predict(model: Model, rows) -> np.ndarray:
    """Predict label codes for a feature matrix (or a Dataset)."""
    X = np.asarray(getattr(rows, "features", rows), dtype=float)
    if X.size == 0:
        return np.empty(0)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[1] != model.n_features:
        raise ValueError(f"model expects {model.n_features} columns, got {X.shape[1]}")
    return model.classes[_predict_index(model, X)]


def _to_dict(model: Model) -> dict:
    out = {
        "kind": model.kind,
        "classes": model.classes.tolist(),
        "n_features": model.n_features,
        "weights": model.weights.tolist(),
        "members": [_to_dict(m) for m in model.members],
    }
    if model.tree is not None:
        t = model.tree
        out["tree"] = {k: getattr(t, k).tolist() for k in ("feature", "threshold", "left", "right", "value")}
    return out


def _from_dict(data: dict) -> Model:
    tree = None
    if "tree" in data:
        t = data["tree"]
        tree = Tree(np.array(t["feature"], dtype=np.intp), np.array(t["threshold"], dtype=float),
                    np.array(t["left"], dtype=np.intp), np.array(t["right"], dtype=np.intp),
                    np.array(t["value"], dtype=np.intp))
    return Model(data["kind"], np.array(data["classes"], dtype=float), int(data["n_features"]),
                 [_from_dict(m) for m in data["members"]], np.array(data["weights"], dtype=float), tree)


def dumps_model(model: Model) -> str:
    """Serialize to JSON text. Floats are written with repr, so loading is exact."""
    return json.dumps({"format": MODEL_FORMAT, "model": _to_dict(model)}, separators=(",", ":"))


def loads_model(text: str) -> Model:
    data = json.loads(text)
    if data.get("format") != MODEL_FORMAT:
        raise ValueError(f"unsupported model format {data.get('format')!r}")
    return _from_dict(data["model"])
