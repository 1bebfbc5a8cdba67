"""Shared domain types, dataset file formats, and deterministic randomness.

Datasets are dense real feature matrices with integer class labels backed by
a string name table. Two on-disk formats are supported:

* CSV with header ``f0,...,f{d-1},label``; the label column holds class names.
* JSON object ``{"features": [[...]], "labels": ["a", ...], "classes": ["a", "b"]}``.

The missing-value marker ``?`` is rejected here; incomplete data is the
cleaning module's job.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class DqopsError(Exception):
    """Base class for toolkit errors."""


class DataError(DqopsError):
    """Malformed input file or violated data invariant."""


# All stochastic operations are pure functions of (inputs, seed); seeds are
# 64-bit unsigned integers.
Seed = int
MAX_SEED = 2**64 - 1

# A feature vector is a 1-D float64 array of finite reals.
FeatureVector = np.ndarray


def subseed_rng(seed: Seed, *path: int) -> np.random.Generator:
    """Generator for (seed, path) so per-step draws never share a stream."""
    if not 0 <= seed <= MAX_SEED:
        raise DataError(f"seed must be in [0, 2^64), got {seed}")
    return np.random.default_rng([seed, *path])


@dataclass(frozen=True)
class LabelSpace:
    """Ordered class-name table; labels are referenced by index."""

    names: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "names", tuple(str(n) for n in self.names))
        if len(self.names) < 2:
            raise DataError(f"need at least 2 classes, got {len(self.names)}")
        if len(set(self.names)) != len(self.names):
            raise DataError("class names must be unique")

    @property
    def class_count(self) -> int:
        return len(self.names)

    def index_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise DataError(f"unknown label {name!r}; classes are {list(self.names)}") from None


def _as_feature_matrix(features, *, what: str = "features") -> np.ndarray:
    arr = np.array(features, dtype=np.float64, copy=True)
    if arr.ndim != 2:
        raise DataError(f"{what} must be a 2-D matrix, got shape {arr.shape}")
    if arr.shape[1] == 0:
        raise DataError(f"{what} must have at least one column")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{what} contain non-finite values")
    arr.flags.writeable = False
    return arr


def _as_label_vector(labels, class_count: int) -> np.ndarray:
    arr = np.array(labels, dtype=np.int64, copy=True)
    if arr.ndim != 1:
        raise DataError(f"labels must be a 1-D vector, got shape {arr.shape}")
    if arr.size and (arr.min() < 0 or arr.max() >= class_count):
        raise DataError(f"label indices must be in [0, {class_count})")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Immutable (features, labels) pair over a fixed label space."""

    features: np.ndarray
    labels: np.ndarray
    classes: LabelSpace

    def __post_init__(self) -> None:
        object.__setattr__(self, "features", _as_feature_matrix(self.features))
        object.__setattr__(self, "labels", _as_label_vector(self.labels, self.classes.class_count))
        if self.features.shape[0] != self.labels.shape[0]:
            raise DataError(
                f"{self.features.shape[0]} feature rows vs {self.labels.shape[0]} labels"
            )

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def dimension(self) -> int:
        return self.features.shape[1]

    @property
    def class_count(self) -> int:
        return self.classes.class_count

    def label_names(self) -> list[str]:
        return [self.classes.names[i] for i in self.labels]

    def with_features(self, features) -> "LabeledDataset":
        return LabeledDataset(features, self.labels, self.classes)

    def with_labels(self, labels) -> "LabeledDataset":
        return LabeledDataset(self.features, labels, self.classes)

    def __eq__(self, other) -> bool:
        if not isinstance(other, LabeledDataset):
            return NotImplemented
        return (
            self.classes == other.classes
            and self.features.shape == other.features.shape
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
        )


@dataclass(frozen=True, eq=False)
class PredictionMatrix:
    """Label predictions, one row per evaluation sample and one column per model."""

    entries: np.ndarray
    class_count: int

    def __post_init__(self) -> None:
        arr = np.array(self.entries, dtype=np.int64, copy=True)
        if arr.ndim != 2:
            raise DataError(f"prediction matrix must be 2-D, got shape {arr.shape}")
        if arr.size and (arr.min() < 0 or arr.max() >= self.class_count):
            raise DataError(f"predictions must be label indices in [0, {self.class_count})")
        arr.flags.writeable = False
        object.__setattr__(self, "entries", arr)

    @property
    def n_rows(self) -> int:
        return self.entries.shape[0]

    @property
    def n_models(self) -> int:
        return self.entries.shape[1]

    def column(self, j: int) -> np.ndarray:
        return self.entries[:, j]


def zero_one_loss(predicted: int, truth: int) -> int:
    """0 iff the prediction matches the true label, else 1."""
    return 0 if predicted == truth else 1


def accuracy(predictions, truths) -> float:
    """1 minus the mean 0-1 loss of a prediction column."""
    predictions = np.asarray(predictions)
    truths = np.asarray(truths)
    if predictions.shape != truths.shape:
        raise DataError(f"shape mismatch: {predictions.shape} vs {truths.shape}")
    if predictions.size == 0:
        raise DataError("cannot score an empty prediction column")
    return float(np.mean(predictions == truths))


def _format_float(x: float) -> str:
    # repr round-trips doubles exactly, which save/load relies on
    return repr(float(x))


def _parse_feature_cell(cell: str, line_no: int) -> float:
    text = cell.strip()
    if text == "?":
        raise DataError(
            f"line {line_no}: missing-value marker '?' is only legal for incomplete datasets"
        )
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"line {line_no}: malformed feature value {cell!r}") from None
    if not math.isfinite(value):
        raise DataError(f"line {line_no}: non-finite feature value {cell!r}")
    return value


def _expect_header(header: list[str], prefix: str, line_no: int = 1) -> int:
    """Validate a `p0,...,p{d-1}` column block and return d."""
    width = len(header)
    if width == 0:
        raise DataError(f"line {line_no}: empty header")
    expected = [f"{prefix}{i}" for i in range(width)]
    if [h.strip() for h in header] != expected:
        raise DataError(
            f"line {line_no}: header must be {prefix}0..{prefix}{{d-1}}, got {header!r}"
        )
    return width


def _infer_format(path: Path, fmt: str | None) -> str:
    if fmt is not None:
        if fmt not in ("csv", "json"):
            raise DataError(f"unknown format {fmt!r}")
        return fmt
    suffix = path.suffix.lower()
    if suffix == ".json":
        return "json"
    if suffix in (".csv", ".txt"):
        return "csv"
    # extensionless files (content-addressed artifacts): sniff the first byte
    if path.exists():
        head = path.read_text(errors="replace").lstrip()[:1]
        if head in ("{", "["):
            return "json"
    return "csv"


def load_dataset(path, fmt: str | None = None, classes: list[str] | None = None) -> LabeledDataset:
    """Load a labeled dataset from CSV or JSON.

    CSV class names are inferred as the sorted distinct labels unless
    ``classes`` pins them explicitly; JSON files carry their own ``classes``.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    if _infer_format(path, fmt) == "json":
        return _load_dataset_json(path, classes)
    return _load_dataset_csv(path, classes)


def _load_dataset_csv(path: Path, classes: list[str] | None) -> LabeledDataset:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header = rows[0]
    if len(header) < 2 or header[-1].strip() != "label":
        raise DataError(f"{path}: line 1: header must end with a 'label' column")
    d = _expect_header(header[:-1], "f")
    features: list[list[float]] = []
    label_names: list[str] = []
    for i, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != d + 1:
            raise DataError(f"{path}: line {i}: expected {d + 1} cells, got {len(row)}")
        features.append([_parse_feature_cell(c, i) for c in row[:-1]])
        label_names.append(row[-1].strip())
    if not features:
        raise DataError(f"{path}: no data rows")
    space = LabelSpace(tuple(classes) if classes else tuple(sorted(set(label_names))))
    labels = [space.index_of(name) for name in label_names]
    return LabeledDataset(np.array(features), labels, space)


def _load_dataset_json(path: Path, classes: list[str] | None) -> LabeledDataset:
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise DataError(f"{path}: top-level JSON value must be an object")
    for key in ("features", "labels", "classes"):
        if key not in doc:
            raise DataError(f"{path}: missing key {key!r}")
    space = LabelSpace(tuple(classes) if classes else tuple(doc["classes"]))
    labels = [space.index_of(str(name)) for name in doc["labels"]]
    try:
        features = np.asarray(doc["features"], dtype=np.float64)
    except (TypeError, ValueError):
        raise DataError(f"{path}: features are not a numeric matrix") from None
    if features.ndim != 2:
        raise DataError(f"{path}: features are not a rectangular matrix")
    if not np.all(np.isfinite(features)):
        raise DataError(f"{path}: features contain non-finite values")
    return LabeledDataset(features, labels, space)


def save_dataset(dataset: LabeledDataset, path, fmt: str | None = None) -> None:
    """Write a dataset; a later ``load_dataset`` reproduces it exactly."""
    path = Path(path)
    if _infer_format(path, fmt) == "json":
        path.write_text(dataset_to_json(dataset))
    else:
        path.write_text(dataset_to_csv(dataset))


def dataset_to_csv(dataset: LabeledDataset) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([f"f{i}" for i in range(dataset.dimension)] + ["label"])
    for row, label in zip(dataset.features, dataset.labels):
        writer.writerow([_format_float(v) for v in row] + [dataset.classes.names[label]])
    return buf.getvalue()


def dataset_to_json(dataset: LabeledDataset) -> str:
    return json.dumps(
        {
            "features": [[float(v) for v in row] for row in dataset.features],
            "labels": dataset.label_names(),
            "classes": list(dataset.classes.names),
        }
    )


def load_feature_table(path, prefix: str = "f", fmt: str | None = None) -> np.ndarray:
    """Load an unlabeled feature matrix (CSV header ``{prefix}0,...``) or JSON.

    Used for validation splits (prefix ``f``) and embedding tables (prefix
    ``e``); rows are index-aligned with the dataset they accompany.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    if _infer_format(path, fmt) == "json":
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
        if isinstance(doc, dict):
            doc = doc.get("features")
        return _as_feature_matrix(doc, what=f"{path} features")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    d = _expect_header(rows[0], prefix)
    data = []
    for i, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != d:
            raise DataError(f"{path}: line {i}: expected {d} cells, got {len(row)}")
        data.append([_parse_feature_cell(c, i) for c in row])
    if not data:
        raise DataError(f"{path}: no data rows")
    return _as_feature_matrix(data, what=f"{path} features")


def feature_table_to_csv(features: np.ndarray, prefix: str = "f") -> str:
    features = np.asarray(features, dtype=np.float64)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([f"{prefix}{i}" for i in range(features.shape[1])])
    for row in features:
        writer.writerow([_format_float(v) for v in row])
    return buf.getvalue()
