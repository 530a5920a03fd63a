import csv

import pytest

from stuntkit.cli import main, parse_args
from stuntkit.dataset import NORMAL, STUNTED, STUNTING, class_distribution, load_dataset

SMALL = ["--n-trees", "8", "--n-bagging", "8", "--n-rounds", "8"]


def run(*argv):
    return main([str(a) for a in argv] + ["--quiet"])


@pytest.fixture(scope="module")
def cohort_csv(tmp_path_factory):
    out = tmp_path_factory.mktemp("cohort")
    assert run("synth", "--n", 752, "--proportions", "0.86,0.12,0.02", "--seed", 7, "--out", out) == 0
    return out / "cohort.csv"


def test_synth_writes_rows_and_provenance(cohort_csv):
    ds = load_dataset(cohort_csv)
    assert len(ds) == 752
    assert class_distribution(ds).counts == {NORMAL: 647, STUNTED: 90, STUNTING: 15}
    prov = (cohort_csv.parent / "cohort.provenance.txt").read_text()
    assert "seed=7" in prov and "count.Stunted=90" in prov


def test_synth_deterministic(tmp_path, cohort_csv):
    assert run("synth", "--n", 752, "--proportions", "0.86,0.12,0.02", "--seed", 7, "--out", tmp_path) == 0
    assert (tmp_path / "cohort.csv").read_bytes() == cohort_csv.read_bytes()


def test_synth_zero_is_usage_error(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        run("synth", "--n", 0, "--out", tmp_path)
    assert exc.value.code == 2
    assert "positive" in capsys.readouterr().err
    assert not (tmp_path / "cohort.csv").exists()


def test_resample_smote_balances(tmp_path, cohort_csv):
    assert run("resample", "--input", cohort_csv, "--method", "smote", "--seed", 1, "--out", tmp_path) == 0
    ds = load_dataset(tmp_path / "resampled.csv", fractional_gender=True)
    assert set(class_distribution(ds).counts.values()) == {647}
    report = (tmp_path / "resampled.provenance.txt").read_text()
    assert "method=smote" in report and "seed=1" in report


def test_resample_unknown_method(tmp_path, cohort_csv, capsys):
    assert run("resample", "--input", cohort_csv, "--method", "nosuch", "--out", tmp_path) == 1
    err = capsys.readouterr().err.strip()
    assert len(err.splitlines()) == 1
    assert "valid methods" in err and "edited-radius-smote" in err
    assert list(tmp_path.iterdir()) == []


def test_resample_seed_changes_only_synthetic_rows(tmp_path, cohort_csv):
    rows = {}
    for seed in (1, 2):
        out = tmp_path / str(seed)
        assert run("resample", "--input", cohort_csv, "--method", "smote", "--seed", seed, "--out", out) == 0
        rows[seed] = (out / "resampled.csv").read_text().splitlines()
    original = cohort_csv.read_text().splitlines()
    assert rows[1][: len(original)] == rows[2][: len(original)] == original
    assert rows[1][len(original):] != rows[2][len(original):]


def _csv_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_pipeline_full_grid_and_rerun(tmp_path, cohort_csv):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert run("pipeline", "--input", cohort_csv, "--seed", 3, "--out", out, *SMALL) == 0
    rows = _csv_rows(a / "report.csv")
    plain = [r for r in rows if r["classifier"] != "voting"]
    assert len(plain) == 9 * 3
    assert len(rows) - len(plain) == 3 * 3
    assert {r["method"] for r in rows} == {"smote", "radius-smote", "edited-radius-smote"}
    assert (a / "report.csv").read_bytes() == (b / "report.csv").read_bytes()
    assert (a / "report.txt").read_bytes() == (b / "report.txt").read_bytes()
    text = (a / "report.txt").read_text()
    assert text.splitlines()[0].split() == ["Classifier", "Condition", "Method", "Precision", "Recall", "F-1",
                                             "Score"]


def test_pipeline_single_cell(tmp_path, cohort_csv):
    assert run("pipeline", "--input", cohort_csv, "--methods", "smote", "--classifiers", "forest",
               "--out", tmp_path, *SMALL) == 0
    rows = _csv_rows(tmp_path / "report.csv")
    assert [r["condition"] for r in rows] == ["Normal", "Stunted", "Stunting"]


def test_pipeline_seed_changes_values_not_shape(tmp_path, cohort_csv):
    shapes = []
    for seed in (1, 2):
        out = tmp_path / str(seed)
        assert run("pipeline", "--input", cohort_csv, "--seed", seed, "--out", out, "--methods", "smote",
                   *SMALL) == 0
        rows = _csv_rows(out / "report.csv")
        shapes.append([(r["classifier"], r["condition"], r["method"]) for r in rows])
    assert shapes[0] == shapes[1]


def test_pipeline_bad_classifier(tmp_path, cohort_csv, capsys):
    assert run("pipeline", "--input", cohort_csv, "--classifiers", "svm", "--out", tmp_path) == 1
    assert "svm" in capsys.readouterr().err
    assert not tmp_path.joinpath("report.csv").exists()


def test_label(tmp_path, reference):
    median, sd = reference.lookup(24, 1)
    src = tmp_path / "children.csv"
    src.write_text("age_months,gender,height_cm,weight_kg\n"
                   f"24,1,{median!r},12.0\n24,1,{median - 2.5 * sd!r},10.5\n")
    assert run("label", "--input", src, "--out", tmp_path) == 0
    assert load_dataset(tmp_path / "labeled.csv").labels.tolist() == [NORMAL, STUNTING]


def test_label_cohort_is_fixed_point(tmp_path, cohort_csv):
    assert run("label", "--input", cohort_csv, "--out", tmp_path) == 0
    assert load_dataset(tmp_path / "labeled.csv").labels.tolist() == load_dataset(cohort_csv).labels.tolist()


def test_label_uncovered_age(tmp_path, capsys):
    src = tmp_path / "children.csv"
    src.write_text("age_months,gender,height_cm,weight_kg\n72,1,110,18\n")
    assert run("label", "--input", src, "--out", tmp_path) == 1
    assert "row 1" in capsys.readouterr().err
    assert not (tmp_path / "labeled.csv").exists()


@pytest.mark.parametrize("slope", [1.0, 0.9986, 0.9919])
def test_calibrate(tmp_path, capsys, slope):
    src = tmp_path / "pairs.csv"
    src.write_text("reference,measured\n" + "".join(f"{x},{slope * x!r}\n" for x in range(1, 31)))
    assert main(["calibrate", "--input", str(src)]) == 0
    values = dict(line.split("=") for line in capsys.readouterr().out.split())
    assert f"{float(values['slope']):.4f}" == f"{slope:.4f}"
    assert float(values["r_squared"]) >= 1 - 1e-9 and values["n"] == "30"


def test_calibrate_single_row(tmp_path, capsys):
    src = tmp_path / "pairs.csv"
    src.write_text("reference,measured\n1,1\n")
    assert main(["calibrate", "--input", str(src)]) == 1
    assert "error" in capsys.readouterr().err


def test_config_file_and_override(tmp_path, cohort_csv):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"# pipeline defaults\ninput={cohort_csv}\nmethod=smote\nseed=5\nk-neighbors=3\n")
    args = parse_args(["resample", "--config", str(cfg)])
    assert (args.method, args.seed, args.k_neighbors) == ("smote", 5, 3)
    args = parse_args(["resample", "--config", str(cfg), "--seed", "9"])
    assert args.seed == 9
    cfg.write_text("n=10\nliteral_abs=true\n")
    with pytest.raises(SystemExit):
        parse_args(["synth", "--config", str(cfg)])
    cfg.write_text(f"input={cohort_csv}\nmethod=smote\nliteral_abs=yes\n")
    assert parse_args(["resample", "--config", str(cfg)]).literal_abs is True


def test_config_unknown_key(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("n=10\ncolour=blue\n")
    with pytest.raises(SystemExit) as exc:
        parse_args(["synth", "--config", str(cfg)])
    assert exc.value.code == 2 and "colour" in capsys.readouterr().err
