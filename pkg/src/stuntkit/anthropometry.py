"""Height-for-age labeling, sensor arithmetic and synthetic cohorts."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .dataset import (CLASS_ORDER, FEATURES, NORMAL, STUNTED, STUNTING, Dataset, DataError,
                      largest_remainder)

# weight = intercept + height_coef * height_cm + age_coef * age_months + N(0, noise_sd),
# tuned by hand to plausible under-five values; weight never influences the label
WEIGHT_MODEL = {"version": 1, "intercept": -9.5, "height_coef": 0.25, "age_coef": 0.01,
                "noise_sd": 0.8, "floor_kg": 1.5}

# target z ranges drawn per intended class
Z_RANGES = {STUNTING: (-3.0, -2.0), STUNTED: (-4.5, -3.0)}


@dataclass(frozen=True)
class GrowthReference:
    """(age in months, sex) -> (median height cm, SD cm)."""

    entries: dict[tuple[int, int], tuple[float, float]]

    def __post_init__(self):
        for key, (median, sd) in self.entries.items():
            if not sd > 0:
                raise DataError(f"reference entry {key} has non-positive SD")
        for sex in {s for _, s in self.entries}:
            ages = sorted(a for a, s in self.entries if s == sex)
            if ages != list(range(ages[0], ages[-1] + 1)):
                raise DataError(f"reference ages for sex {sex} are not contiguous")

    @property
    def age_range(self) -> tuple[int, int]:
        ages = [a for a, _ in self.entries]
        return min(ages), max(ages)

    def lookup(self, age, sex) -> tuple[float, float]:
        a, s = float(age), float(sex)
        if a != int(a) or s not in (0.0, 1.0) or (int(a), int(s)) not in self.entries:
            raise KeyError(f"no reference entry for age {age} months, sex {sex}")
        return self.entries[(int(a), int(s))]


def load_reference(path=None) -> GrowthReference:
    """Read a reference CSV (age_months, sex, median_cm, sd_cm); '#' lines are comments.

    Without a path the bundled approximate table (0-60 months) is used. It is
    a stand-in for tests and synthetic data, not a clinical standard.
    """
    if path is None:
        text = resources.files("stuntkit.data").joinpath("growth_reference.csv").read_text("utf-8")
    else:
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"no such file: {path}")
        text = path.read_text("utf-8")
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    entries = {}
    for lineno, row in enumerate(csv.DictReader(lines), start=2):
        try:
            key = (int(row["age_months"]), int(row["sex"]))
            entries[key] = (float(row["median_cm"]), float(row["sd_cm"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"reference row {lineno}: {exc}") from None
    if not entries:
        raise DataError("growth reference is empty")
    return GrowthReference(entries)


def haz(age, sex, height, ref: GrowthReference) -> float:
    median, sd = ref.lookup(age, sex)
    return (float(height) - median) / sd


def status_from_z(z: float) -> float:
    """z < -3: Stunted; -3 <= z < -2: Stunting; z >= -2: Normal."""
    if z < -3.0:
        return STUNTED
    if z < -2.0:
        return STUNTING
    return NORMAL


def haz_status(age, sex, height, ref: GrowthReference) -> float:
    return status_from_z(haz(age, sex, height, ref))


def label_dataset(ds: Dataset, ref: GrowthReference) -> Dataset:
    """Replace every label with the height-for-age status of its row."""
    age, sex, height = (ds.features[:, ds.schema.index(c)] for c in ("age_months", "gender", "height_cm"))
    labels = []
    for i, (a, s, h) in enumerate(zip(age, sex, height)):
        try:
            labels.append(haz_status(a, s, h, ref))
        except KeyError as exc:
            raise DataError(f"data row {i + 1}: {exc.args[0]}") from None
    return Dataset(ds.features, np.array(labels), ds.schema)


@dataclass(frozen=True)
class UltrasonicReading:
    gap: float
    d1: float
    d2: float


def length_from_ultrasonic(reading: UltrasonicReading) -> float:
    """Object length between two facing sensors: gap - d1 - d2."""
    if not reading.gap > 0:
        raise ValueError("sensor gap must be positive")
    if reading.d1 < 0 or reading.d2 < 0:
        raise ValueError("sensor distances must be non-negative")
    if reading.d1 + reading.d2 > reading.gap:
        raise ValueError(f"d1 + d2 = {reading.d1 + reading.d2} exceeds the sensor gap {reading.gap}")
    return reading.gap - reading.d1 - reading.d2


@dataclass(frozen=True)
class CalibrationFit:
    slope: float
    intercept: float
    r_squared: float
    slope_stderr: float
    n: int


def fit_linear(pairs) -> CalibrationFit:
    """Ordinary least squares of measured on reference values.

    The slope is the sensor sensitivity. ``r_squared = 1 - SS_res / SS_tot``
    (1.0 when the measured values are constant).
    """
    data = np.asarray(list(pairs), dtype=float)
    if data.ndim != 2 or data.shape[0] < 2 or data.shape[1] != 2:
        raise ValueError("need at least two (reference, measured) pairs")
    x, y = data[:, 0], data[:, 1]
    if np.unique(x).shape[0] < 2:
        raise ValueError("reference values are all identical; slope is undefined")
    xm, ym = x.mean(), y.mean()
    dx, dy = x - xm, y - ym
    sxx = float(dx @ dx)
    slope = float(dx @ dy) / sxx
    intercept = float(ym - slope * xm)
    resid = y - (intercept + slope * x)
    ss_res = float(resid @ resid)
    ss_tot = float(dy @ dy)
    n = x.shape[0]
    # measured values constant up to rounding: the flat line fits exactly
    flat = ss_tot <= n * (1e-12 * max(float(np.abs(y).max()), 1.0)) ** 2
    r2 = 1.0 if flat else 1.0 - ss_res / ss_tot
    stderr = math.sqrt(ss_res / (n - 2) / sxx) if n > 2 else math.nan
    return CalibrationFit(slope, intercept, min(max(r2, 0.0), 1.0), stderr, n)


def load_pairs(path) -> list[tuple[float, float]]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or {"reference", "measured"} - {f.strip() for f in reader.fieldnames}:
            raise DataError(f"{path}: header must contain reference,measured")
        pairs = []
        for lineno, row in enumerate(reader, start=2):
            row = {k.strip(): v for k, v in row.items()}
            try:
                pairs.append((float(row["reference"]), float(row["measured"])))
            except (TypeError, ValueError):
                raise DataError(f"row {lineno}: cannot parse {row}") from None
    return pairs


def _draw_z(code: float, n: int, rng: np.random.Generator) -> np.ndarray:
    if code == NORMAL:
        z = rng.standard_normal(n)
        while (bad := z < -2.0).any():
            z[bad] = rng.standard_normal(int(bad.sum()))
        return z
    lo, hi = Z_RANGES[code]
    return rng.uniform(lo, hi, n)


def synth_cohort(n: int, proportions, ref: GrowthReference, rng: np.random.Generator) -> Dataset:
    """Synthetic children with class counts apportioned from `proportions`.

    `proportions` follows the (Normal, Stunted, Stunting) order. Each row gets
    an integer age uniform over the reference range, a uniform sex and a z
    drawn for its intended class (Normal: N(0,1) truncated at -2; Stunting:
    U[-3,-2); Stunted: U[-4.5,-3)). Height is median + z * SD rounded to
    0.1 cm; draws whose rounded height lands in another class are redrawn, so
    labels agree with `haz_status` and the counts are exact.
    """
    if n < 1:
        raise ValueError("n must be a positive integer")
    props = [float(p) for p in proportions]
    if len(props) != len(CLASS_ORDER) or any(p < 0 for p in props) or abs(sum(props) - 1.0) > 1e-9:
        raise ValueError("proportions must be three non-negative numbers summing to 1")
    counts = largest_remainder(props, n)
    lo, hi = ref.age_range
    rows, labels = [], []
    for code, count in zip(CLASS_ORDER, counts):
        age = rng.integers(lo, hi + 1, size=count).astype(float)
        sex = rng.integers(0, 2, size=count).astype(float)
        median = np.array([ref.lookup(a, s)[0] for a, s in zip(age, sex)])
        sd = np.array([ref.lookup(a, s)[1] for a, s in zip(age, sex)])
        height = np.empty(count)
        todo = np.arange(count)
        while todo.size:
            height[todo] = np.round(median[todo] + _draw_z(code, todo.size, rng) * sd[todo], 1)
            z = (height[todo] - median[todo]) / sd[todo]
            todo = todo[np.array([status_from_z(v) != code for v in z], dtype=bool)]
        m = WEIGHT_MODEL
        weight = m["intercept"] + m["height_coef"] * height + m["age_coef"] * age
        weight = np.round(np.maximum(weight + rng.normal(0.0, m["noise_sd"], count), m["floor_kg"]), 1)
        rows.append(np.column_stack([age, sex, height, weight]))
        labels.append(np.full(count, code))
    X, y = np.vstack(rows), np.concatenate(labels)
    order = rng.permutation(n)
    return Dataset(X[order], y[order], FEATURES)
