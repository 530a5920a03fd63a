"""Confusion matrices, one-vs-rest precision/recall/F1 and experiment grids."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace

import numpy as np

from .dataset import CLASS_ORDER, Dataset, class_name, make_rng
from .ensemble import Model, TreeParams, fit_adaboost, fit_bagging, fit_forest, fit_voting, predict
from .resampling import ResamplerConfig, resample


@dataclass(frozen=True)
class ConfusionMatrix:
    """counts[i, j] = rows of true class labels[i] predicted as labels[j]."""

    counts: np.ndarray
    labels: tuple[float, ...] = CLASS_ORDER

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def support(self, label: float) -> int:
        return int(self.counts[self.labels.index(label)].sum())


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


def confusion_matrix(y_true, y_pred, labels=CLASS_ORDER) -> ConfusionMatrix:
    y_true = np.asarray(y_true, dtype=float).reshape(-1)
    y_pred = np.asarray(y_pred, dtype=float).reshape(-1)
    if y_true.shape != y_pred.shape:
        raise ValueError(f"length mismatch: {y_true.shape[0]} true vs {y_pred.shape[0]} predicted labels")
    labels = tuple(float(c) for c in labels)
    lookup = {c: i for i, c in enumerate(labels)}
    unknown = set(np.unique(np.concatenate([y_true, y_pred])).tolist()) - set(labels)
    if unknown:
        raise ValueError(f"unknown labels {sorted(unknown)}")
    K = len(labels)
    t = np.array([lookup[v] for v in y_true.tolist()], dtype=np.intp)
    p = np.array([lookup[v] for v in y_pred.tolist()], dtype=np.intp)
    counts = np.bincount(t * K + p, minlength=K * K).reshape(K, K)
    return ConfusionMatrix(counts, labels)


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def class_metrics(cm: ConfusionMatrix, label: float) -> ClassMetrics:
    """One-vs-rest metrics; any zero denominator yields 0 rather than NaN."""
    c = cm.labels.index(float(label))
    tp = int(cm.counts[c, c])
    fp = int(cm.counts[:, c].sum()) - tp
    fn = int(cm.counts[c, :].sum()) - tp
    p = _ratio(tp, tp + fp)
    r = _ratio(tp, tp + fn)
    f1 = _ratio(2 * p * r, p + r)
    return ClassMetrics(p, r, f1, tp + fn)


def accuracy(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise ValueError("accuracy of an empty confusion matrix is undefined")
    return float(np.trace(cm.counts)) / cm.total


def micro_average(cm: ConfusionMatrix) -> tuple[float, float, float]:
    tp = float(np.trace(cm.counts))
    fp = float(cm.counts.sum(axis=0).sum()) - tp
    fn = float(cm.counts.sum(axis=1).sum()) - tp
    p, r = _ratio(tp, tp + fp), _ratio(tp, tp + fn)
    return p, r, _ratio(2 * p * r, p + r)


def macro_average(cm: ConfusionMatrix) -> tuple[float, float, float]:
    ms = [class_metrics(cm, c) for c in cm.labels]
    return (float(np.mean([m.precision for m in ms])), float(np.mean([m.recall for m in ms])),
            float(np.mean([m.f1 for m in ms])))


@dataclass(frozen=True)
class ClassifierSpec:
    kind: str
    size: int | None = None
    max_depth: int | None = None

    def fit(self, train: Dataset, rng: np.random.Generator) -> Model:
        if self.kind == "forest":
            return fit_forest(train, self.size or 100, TreeParams(self.max_depth, feature_subsample="sqrt"), rng)
        if self.kind == "bagging":
            return fit_bagging(train, self.size or 100, TreeParams(self.max_depth), rng)
        if self.kind == "adaboost":
            depth = 1 if self.max_depth is None else self.max_depth
            return fit_adaboost(train, self.size or 50, TreeParams(depth), rng)
        raise ValueError(f"unknown classifier {self.kind!r}; valid: forest, adaboost, bagging")


CLASSIFIER_NAMES = {"forest": "Random Forest", "adaboost": "AdaBoost", "bagging": "Bagging", "voting": "Voting"}
METHOD_NAMES = {"smote": "SMOTE", "radius-smote": "Radius-SMOTE", "edited-radius-smote": "Edited Radius-SMOTE",
                "smote-tomek": "SMOTE-Tomek", "enn": "ENN", "none": "None"}


@dataclass
class Cell:
    classifier: str
    method: str
    cm: ConfusionMatrix

    @property
    def metrics(self) -> dict[float, ClassMetrics]:
        return {c: class_metrics(self.cm, c) for c in self.cm.labels}

    @property
    def accuracy(self) -> float:
        return accuracy(self.cm)

    @property
    def macro(self) -> tuple[float, float, float]:
        return macro_average(self.cm)


@dataclass
class ExperimentReport:
    cells: list[Cell]
    classifiers: list[str]
    methods: list[str]
    test: Dataset | None = None
    train_counts: dict[str, dict[float, int]] = field(default_factory=dict)

    def cell(self, classifier: str, method: str) -> Cell:
        for c in self.cells:
            if c.classifier == classifier and c.method == method:
                return c
        raise KeyError((classifier, method))

    def _ordered(self):
        for clf in self.classifiers:
            for label in CLASS_ORDER:
                for method in self.methods:
                    cell = self.cell(clf, method)
                    yield cell, label, cell.metrics[label]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["classifier", "condition", "method", "precision", "recall", "f1", "support",
                         "accuracy", "macro_precision", "macro_recall", "macro_f1"])
        for cell, label, m in self._ordered():
            writer.writerow([cell.classifier, class_name(label), cell.method, repr(m.precision), repr(m.recall),
                             repr(m.f1), m.support, repr(cell.accuracy), *map(repr, cell.macro)])
        return buf.getvalue()

    def to_text(self) -> str:
        header = ("Classifier", "Condition", "Method", "Precision", "Recall", "F-1 Score")
        rows = []
        last = None
        for cell, label, m in self._ordered():
            key = (cell.classifier, label)
            clf = CLASSIFIER_NAMES.get(cell.classifier, cell.classifier) if last is None or last[0] != key[0] else ""
            cond = class_name(label) if last != key else ""
            last = key
            rows.append((clf, cond, METHOD_NAMES.get(cell.method, cell.method),
                         f"{m.precision:.2f}", f"{m.recall:.2f}", f"{m.f1:.2f}"))
        widths = [max(len(r[i]) for r in rows + [header]) for i in range(len(header))]
        line = "  ".join("-" * w for w in widths)
        out = ["  ".join(h.ljust(w) for h, w in zip(header, widths)), line]
        out += ["  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip() for r in rows]
        out += ["", "Accuracy / macro-F1 per cell"]
        for cell in self.cells:
            out.append(f"  {CLASSIFIER_NAMES.get(cell.classifier, cell.classifier):<14} "
                       f"{METHOD_NAMES.get(cell.method, cell.method):<20} "
                       f"accuracy={cell.accuracy:.2f} macro_f1={cell.macro[2]:.2f}")
        return "\n".join(out) + "\n"


def _as_spec(c) -> ClassifierSpec:
    return c if isinstance(c, ClassifierSpec) else ClassifierSpec(str(c))


def run_experiment_grid(train: Dataset, test: Dataset, methods, classifiers, seed: int,
                        resampler: ResamplerConfig | None = None, voting: bool = True) -> ExperimentReport:
    """Resample `train` with each method, fit every classifier, score on `test`.

    The test partition is never resampled. Each method gets its own resampling
    seed and each (method, classifier) cell its own model seed, derived from
    `seed` by position, so cells do not depend on evaluation order. With two
    or more classifiers a hard-voting committee of them is scored as an
    extra "voting" row per method.
    """
    if train.schema != test.schema:
        raise ValueError("train and test schemas differ")
    methods = list(methods)
    specs = [_as_spec(c) for c in classifiers]
    if not methods or not specs:
        raise ValueError("need at least one method and one classifier")
    base = resampler or ResamplerConfig()
    cells, train_counts = [], {}
    for mi, method in enumerate(methods):
        cfg = replace(base, seed=int(make_rng(seed, 0, mi).integers(0, 2**63 - 1)))
        resampled, _ = resample(train, method, cfg)
        train_counts[method] = {c: int(np.count_nonzero(resampled.labels == c)) for c in CLASS_ORDER}
        fitted = []
        for ci, spec in enumerate(specs):
            model = spec.fit(resampled, make_rng(seed, 1, mi, ci))
            fitted.append(model)
            cells.append(Cell(spec.kind, method, confusion_matrix(test.labels, predict(model, test))))
        if voting and len(fitted) >= 2:
            committee = fit_voting(fitted)
            cells.append(Cell("voting", method, confusion_matrix(test.labels, predict(committee, test))))
    names = [s.kind for s in specs] + (["voting"] if voting and len(specs) >= 2 else [])
    return ExperimentReport(cells, names, methods, test, train_counts)
