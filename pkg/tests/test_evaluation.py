import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from stuntkit.dataset import CLASS_ORDER, NORMAL, STUNTED, STUNTING, Dataset, make_rng, stratified_split
from stuntkit.evaluation import (ClassifierSpec, ConfusionMatrix, accuracy, class_metrics, confusion_matrix,
                                 macro_average, micro_average, run_experiment_grid)

matrices = st.lists(st.integers(0, 50), min_size=9, max_size=9).map(lambda v: np.array(v).reshape(3, 3))


def cm_of(grid):
    return ConfusionMatrix(np.asarray(grid))


def test_perfect_predictions_diagonal():
    y = [NORMAL] * 5 + [STUNTED] * 3 + [STUNTING] * 2
    cm = confusion_matrix(y, y)
    assert cm.counts.tolist() == [[5, 0, 0], [0, 3, 0], [0, 0, 2]]
    assert all(class_metrics(cm, c).f1 == 1.0 for c in CLASS_ORDER)
    assert accuracy(cm) == 1.0


def test_everything_predicted_stunted():
    y = [NORMAL] * 4 + [STUNTING] * 2
    cm = confusion_matrix(y, [STUNTED] * 6)
    assert cm.counts[:, 1].tolist() == [4, 0, 2] and cm.counts.sum() == 6


def test_confusion_matches_tally():
    rng = np.random.default_rng(0)
    t = rng.choice(CLASS_ORDER, 60).tolist()
    p = rng.choice(CLASS_ORDER, 60).tolist()
    assert confusion_matrix(t, p).counts.tolist() == oracles.confusion(t, p, list(CLASS_ORDER))


def test_confusion_errors():
    with pytest.raises(ValueError, match="length"):
        confusion_matrix([NORMAL], [NORMAL, NORMAL])
    with pytest.raises(ValueError, match="unknown"):
        confusion_matrix([NORMAL], [0.7])


def test_stunted_metrics_by_hand():
    m = class_metrics(cm_of([[8, 2, 0], [1, 9, 0], [0, 0, 10]]), STUNTED)
    p, r = 9 / 11, 9 / 10
    assert m.precision == pytest.approx(p, abs=1e-12)
    assert m.recall == pytest.approx(r, abs=1e-12)
    assert m.f1 == pytest.approx(2 * p * r / (p + r), abs=1e-12)
    assert round(m.precision, 3) == 0.818 and round(m.f1, 3) == 0.857
    assert m.support == 10


def test_zero_support_class():
    m = class_metrics(cm_of([[5, 0, 0], [0, 5, 0], [0, 0, 0]]), STUNTING)
    assert (m.precision, m.recall, m.f1, m.support) == (0.0, 0.0, 0.0, 0)


def test_accuracy_examples():
    assert accuracy(cm_of(np.ones((3, 3), dtype=int))) == pytest.approx(3 / 9)
    with pytest.raises(ValueError):
        accuracy(cm_of(np.zeros((3, 3), dtype=int)))


@given(matrices.filter(lambda g: g.sum() > 0))
def test_metric_identities(grid):
    cm = cm_of(grid)
    p, r, _ = micro_average(cm)
    assert abs(p - accuracy(cm)) <= 1e-12 and abs(r - accuracy(cm)) <= 1e-12
    ms = [class_metrics(cm, c) for c in CLASS_ORDER]
    for m in ms:
        assert 0.0 <= m.f1 <= 1.0
        if m.precision + m.recall > 0:
            assert abs(m.f1 - 2 * m.precision * m.recall / (m.precision + m.recall)) <= 1e-12
    tp = sum(cm.counts[i, i] for i in range(3))
    assert tp == np.trace(cm.counts)
    assert sum(m.support for m in ms) == cm.total
    assert macro_average(cm)[2] == pytest.approx(np.mean([m.f1 for m in ms]))


def separable(n_per=(40, 12, 8), seed=0):
    rng = np.random.default_rng(seed)
    centers = {NORMAL: 0.0, STUNTED: 20.0, STUNTING: 40.0}
    X, y = [], []
    for (code, c), n in zip(centers.items(), n_per):
        X.append(rng.normal(c, 1.0, (n, 2)))
        y += [code] * n
    return Dataset(np.vstack(X), y, ("a", "b"))


def test_grid_single_cell_shape():
    train, test = stratified_split(separable(), 0.25, make_rng(0))
    report = run_experiment_grid(train, test, ["smote"], [ClassifierSpec("forest", 10)], seed=1)
    assert len(report.cells) == 1
    csv_rows = report.to_csv().strip().splitlines()
    assert len(csv_rows) == 1 + 3
    assert [r.split(",")[1] for r in csv_rows[1:]] == ["Normal", "Stunted", "Stunting"]


def test_separable_grid_is_perfect():
    train, test = stratified_split(separable(), 0.25, make_rng(0))
    specs = [ClassifierSpec("forest", 10), ClassifierSpec("adaboost", 10), ClassifierSpec("bagging", 10)]
    methods = ["smote", "radius-smote", "edited-radius-smote"]
    report = run_experiment_grid(train, test, methods, specs, seed=3)
    assert len(report.cells) == 3 * 4
    for cell in report.cells:
        assert cell.accuracy == 1.0
        assert all(m.f1 == 1.0 for m in cell.metrics.values())
    assert "Random Forest" in report.to_text() and "1.00" in report.to_text()


def test_test_partition_untouched():
    train, test = stratified_split(separable(), 0.25, make_rng(0))
    before = (test.features.tobytes(), test.labels.tobytes())
    report = run_experiment_grid(train, test, ["smote", "edited-radius-smote"], [ClassifierSpec("forest", 5)], 0)
    assert (report.test.features.tobytes(), report.test.labels.tobytes()) == before
    for cell in report.cells:
        assert cell.cm.total == len(test)
        assert [cell.cm.support(c) for c in CLASS_ORDER] == [int(np.sum(test.labels == c)) for c in CLASS_ORDER]


def test_grid_deterministic():
    train, test = stratified_split(separable(seed=1), 0.25, make_rng(0))
    specs = [ClassifierSpec("forest", 5), ClassifierSpec("bagging", 5)]
    a = run_experiment_grid(train, test, ["smote"], specs, 9).to_csv()
    b = run_experiment_grid(train, test, ["smote"], specs, 9).to_csv()
    assert a == b


def test_grid_errors():
    ds = separable()
    other = Dataset(ds.features, ds.labels, ("x", "y"))
    with pytest.raises(ValueError, match="schema"):
        run_experiment_grid(ds, other, ["smote"], ["forest"], 0)
    with pytest.raises(ValueError):
        run_experiment_grid(ds, ds, [], ["forest"], 0)
    with pytest.raises(ValueError, match="unknown classifier"):
        run_experiment_grid(ds, ds, ["none"], ["svm"], 0)
