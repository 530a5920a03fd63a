"""Dataset container, CSV I/O, label encoding and stratified splitting.

Features are kept in natural units (months, encoded sex, cm, kg); nothing in
the toolkit rescales them, so every distance computation runs on raw units.
"""

from __future__ import annotations

import csv
import io
import math
import os
import tempfile
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

import numpy as np

FEATURES = ("age_months", "gender", "height_cm", "weight_kg")
STATUS = "status"

NORMAL = 0.0
STUNTING = 0.5
STUNTED = 1.0

# display order follows the confusion-matrix layout: Normal, Stunted, Stunting
CLASS_ORDER = (NORMAL, STUNTED, STUNTING)
CLASS_NAMES = {NORMAL: "Normal", STUNTING: "Stunting", STUNTED: "Stunted"}

_ENCODINGS = {
    "gender": {"male": 0.0, "female": 1.0},
    "status": {"normal": NORMAL, "stunting": STUNTING, "stunted": STUNTED},
}


class DataError(ValueError):
    """Raised for malformed input files or invalid dataset contents."""


def class_name(code: float) -> str:
    try:
        return CLASS_NAMES[float(code)]
    except KeyError:
        raise DataError(f"unknown class code {code!r}") from None


def class_code(name: str) -> float:
    return encode_value("status", name)


def encode_value(column: str, raw: str) -> float:
    """Map a category string of the gender or status column to its code.

    Matching ignores case and surrounding whitespace.
    """
    key = column.strip().lower()
    if key == STATUS:
        table = _ENCODINGS["status"]
    elif key == "gender":
        table = _ENCODINGS["gender"]
    else:
        raise DataError(f"column {column!r} has no categorical encoding")
    value = raw.strip().lower()
    if value not in table:
        raise DataError(f"unknown {key} category {raw!r}; expected one of {sorted(table)}")
    return table[value]


def decode_value(column: str, code: float) -> str:
    key = column.strip().lower()
    if key not in _ENCODINGS:
        raise DataError(f"column {column!r} has no categorical encoding")
    for name, value in _ENCODINGS[key].items():
        if value == float(code):
            return name
    raise DataError(f"unknown {key} code {code!r}")


@dataclass(frozen=True)
class Dataset:
    """Feature matrix plus class codes (0, 0.5, 1) and the column schema."""

    features: np.ndarray
    labels: np.ndarray
    schema: tuple[str, ...] = FEATURES

    def __post_init__(self):
        X = np.array(self.features, dtype=float)
        if X.ndim == 1 and X.size == 0:
            X = X.reshape(0, len(self.schema))
        if X.ndim != 2:
            raise DataError("features must be a 2-D matrix")
        y = np.array(self.labels, dtype=float).reshape(-1)
        if X.shape[0] != y.shape[0]:
            raise DataError(f"{X.shape[0]} feature rows but {y.shape[0]} labels")
        if X.shape[1] != len(self.schema):
            raise DataError(f"{X.shape[1]} feature columns but schema names {len(self.schema)}")
        if not np.all(np.isfinite(X)):
            raise DataError("features contain NaN or infinite values")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "schema", tuple(self.schema))

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, index) -> Dataset:
        index = np.asarray(index, dtype=np.intp)
        return Dataset(self.features[index], self.labels[index], self.schema)

    def append(self, features, labels) -> Dataset:
        X = np.vstack([self.features, np.asarray(features, dtype=float).reshape(-1, self.n_features)])
        y = np.concatenate([self.labels, np.asarray(labels, dtype=float).reshape(-1)])
        return Dataset(X, y, self.schema)

    def class_indices(self, code: float) -> np.ndarray:
        return np.flatnonzero(self.labels == code)

    def classes(self) -> tuple[float, ...]:
        return tuple(sorted(set(self.labels.tolist())))


def validate_child_rows(ds: Dataset, fractional_gender: bool = False) -> None:
    """Check the anthropometric range constraints of the child schema.

    Oversampled rows interpolate the gender code, so resampler output carries
    values strictly between 0 and 1; ``fractional_gender`` admits those.
    """
    if ds.schema != FEATURES or len(ds) == 0:
        return
    age, gender, height, weight = ds.features.T
    checks = [
        (age < 0, "age_months must be >= 0"),
        ((gender < 0) | (gender > 1) if fractional_gender else ~np.isin(gender, (0.0, 1.0)),
         "gender must be in [0, 1]" if fractional_gender else "gender must be 0 or 1"),
        (height <= 0, "height_cm must be > 0"),
        (weight <= 0, "weight_kg must be > 0"),
        (~np.isin(ds.labels, CLASS_ORDER), "status must be one of 0, 0.5, 1"),
    ]
    for bad, message in checks:
        if bad.any():
            row = int(np.flatnonzero(bad)[0]) + 1
            raise DataError(f"data row {row}: {message}")


def _parse_cell(column: str, raw: str, row: int, fractional_gender: bool = False) -> float:
    text = raw.strip()
    if column in _ENCODINGS:
        try:
            value = float(text)
        except ValueError:
            return encode_value(column, text)
        if fractional_gender and column == "gender" and 0.0 <= value <= 1.0:
            return value
        if value not in _ENCODINGS[column].values():
            raise DataError(f"row {row}, column {column}: invalid code {raw!r}")
        return value
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"row {row}, column {column}: cannot parse {raw!r} as a number") from None
    if not math.isfinite(value):
        raise DataError(f"row {row}, column {column}: non-finite value {raw!r}")
    return value


def load_dataset(path, schema: dict[str, str] | None = None, drop_incomplete: bool = False,
                 require_status: bool = True, fractional_gender: bool = False) -> Dataset:
    """Read a child-measurement CSV.

    `schema` maps file header names onto the canonical columns
    (age_months, gender, height_cm, weight_kg, status). Rows with empty cells
    are rejected unless `drop_incomplete` is set. With ``require_status=False``
    a missing status column yields NaN labels replaced by zeros; used only by
    the labeling path, which overwrites them. ``fractional_gender`` accepts
    interpolated gender codes in [0, 1], as written by the resampler.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    mapping = {k.strip().lower(): v for k, v in (schema or {}).items()}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: missing header row") from None
        names = [mapping.get(h.strip().lower(), h.strip().lower()) for h in header]
        if len(set(names)) != len(names):
            raise DataError(f"{path}: duplicate or ambiguous header {header}")
        wanted = list(FEATURES) + ([STATUS] if require_status or STATUS in names else [])
        missing = [c for c in wanted if c not in names]
        if missing:
            raise DataError(f"{path}: header lacks columns {missing}")
        position = {c: names.index(c) for c in wanted}
        rows, labels = [], []
        for lineno, record in enumerate(reader, start=2):
            if not record or all(not cell.strip() for cell in record):
                continue
            if len(record) != len(header):
                raise DataError(f"row {lineno}: expected {len(header)} cells, found {len(record)}")
            cells = {c: record[position[c]] for c in wanted}
            empty = [c for c, v in cells.items() if not v.strip() or v.strip().lower() in ("na", "nan")]
            if empty:
                if drop_incomplete:
                    continue
                raise DataError(f"row {lineno}: missing value in column {empty[0]}")
            rows.append([_parse_cell(c, cells[c], lineno, fractional_gender) for c in FEATURES])
            labels.append(_parse_cell(STATUS, cells[STATUS], lineno) if STATUS in cells else 0.0)
    ds = Dataset(np.array(rows, dtype=float).reshape(-1, len(FEATURES)), np.array(labels), FEATURES)
    validate_child_rows(ds, fractional_gender)
    return ds


def _fmt(value: float) -> str:
    return repr(float(value))


def dataset_to_csv(ds: Dataset) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(list(ds.schema) + [STATUS])
    for row, label in zip(ds.features, ds.labels):
        writer.writerow([_fmt(v) for v in row] + [_fmt(label)])
    return buf.getvalue()


def write_text_atomic(path, text: str) -> None:
    """Write via a temporary sibling file and rename, so no partial file remains."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_dataset(ds: Dataset, path) -> None:
    # repr() round-trips doubles exactly, so load_dataset restores identical bits
    write_text_atomic(path, dataset_to_csv(ds))


@dataclass(frozen=True)
class ClassDistribution:
    counts: dict[float, int]
    percentages: dict[float, int]
    total: int = field(default=0)

    def as_rows(self) -> list[tuple[str, int, int]]:
        return [(class_name(c), self.counts[c], self.percentages[c]) for c in CLASS_ORDER]


def largest_remainder(weights, total: int) -> list[int]:
    """Apportion `total` integer units proportionally to `weights`.

    Floors first, then hands leftover units to the largest fractional parts
    (earlier entries win ties).
    """
    weights = [float(w) for w in weights]
    norm = sum(weights)
    if total == 0 or norm == 0:
        return [0] * len(weights)
    exact = [w * total / norm for w in weights]
    base = [math.floor(e) for e in exact]
    order = sorted(range(len(weights)), key=lambda i: (-(exact[i] - base[i]), i))
    for i in order[: total - sum(base)]:
        base[i] += 1
    return base


def class_distribution(ds: Dataset) -> ClassDistribution:
    """Count rows per class; display percentages are integers summing to 100."""
    counts = {c: int(np.count_nonzero(ds.labels == c)) for c in CLASS_ORDER}
    shares = largest_remainder([counts[c] for c in CLASS_ORDER], 100 if len(ds) else 0)
    return ClassDistribution(counts, dict(zip(CLASS_ORDER, shares)), len(ds))


def _round_half_up(x: Decimal) -> int:
    return int(x.quantize(Decimal(1), rounding=ROUND_HALF_UP))


def stratified_split(ds: Dataset, test_fraction: float, rng: np.random.Generator) -> tuple[Dataset, Dataset]:
    """Split each class separately so class proportions carry into both parts.

    Per-class test size is round-half-up(count * fraction), kept inside
    [1, count - 1]; if the per-class sizes miss the rounded overall test size,
    the largest class absorbs the difference. Both parts keep the original
    row order.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    frac = Decimal(repr(float(test_fraction)))
    classes = ds.classes()
    members = {c: ds.class_indices(c) for c in classes}
    sizes = {}
    for c in classes:
        n = len(members[c])
        if n < 2:
            raise ValueError(f"class {class_name(c)} has {n} member(s); cannot place it on both sides")
        sizes[c] = min(max(_round_half_up(n * frac), 1), n - 1)
    if classes:
        largest = max(classes, key=lambda c: (len(members[c]), -c))
        diff = _round_half_up(len(ds) * frac) - sum(sizes.values())
        n = len(members[largest])
        sizes[largest] = min(max(sizes[largest] + diff, 1), n - 1)
    test_idx = []
    for c in classes:
        order = rng.permutation(members[c])
        test_idx.extend(order[: sizes[c]].tolist())
    is_test = np.zeros(len(ds), dtype=bool)
    is_test[test_idx] = True
    return ds.subset(np.flatnonzero(~is_test)), ds.subset(np.flatnonzero(is_test))


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """PCG64 generator for `seed`, optionally forked onto an independent child stream.

    Child streams use NumPy's SeedSequence spawn keys, so (seed, stream) pairs
    give reproducible, non-overlapping generators regardless of call order.
    """
    seed = int(seed)
    if seed < 0 or seed >= 2**64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=tuple(stream))))


def child_seed(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2**63 - 1))
