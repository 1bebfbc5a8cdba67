"""Deterministic exact k-nearest-neighbor classification.

Total determinism is the point: distance ties break toward the lower
training-record index and vote ties toward the lower class index, so any
two runs (and any enumeration over possible worlds) agree bit for bit.

Min-max normalization is fitted on the training split only; query points
are clipped to [0, 1] per feature. A constant training column scales to 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dqops.core import DataError, LabeledDataset

METRICS = ("euclidean",)
NORMALIZATIONS = ("minmax", "none")


@dataclass(frozen=True)
class KnnConfig:
    """k (positive odd), metric, and per-feature normalization."""

    k: int = 1
    metric: str = "euclidean"
    normalization: str = "minmax"

    def __post_init__(self) -> None:
        if self.k < 1 or self.k % 2 == 0:
            raise DataError(f"k must be a positive odd integer, got {self.k}")
        if self.metric not in METRICS:
            raise DataError(f"unknown metric {self.metric!r}")
        if self.normalization not in NORMALIZATIONS:
            raise DataError(f"unknown normalization {self.normalization!r}")

    def to_json_dict(self) -> dict:
        return {"k": self.k, "metric": self.metric, "normalization": self.normalization}

    @classmethod
    def from_json_dict(cls, doc: dict | None) -> "KnnConfig":
        doc = doc or {}
        return cls(
            k=int(doc.get("k", 1)),
            metric=str(doc.get("metric", "euclidean")),
            normalization=str(doc.get("normalization", "minmax")),
        )


def fit_bounds(train_features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-feature (min, span) of the training matrix; span 0 where constant."""
    mins = train_features.min(axis=0)
    spans = train_features.max(axis=0) - mins
    return mins, spans


def scale_features(features: np.ndarray, mins: np.ndarray, spans: np.ndarray, *, clip: bool) -> np.ndarray:
    safe = np.where(spans == 0.0, 1.0, spans)
    scaled = (features - mins) / safe
    scaled = np.where(spans == 0.0, 0.0, scaled)
    if clip:
        scaled = np.clip(scaled, 0.0, 1.0)
    return scaled


def _check_query_matrix(queries: np.ndarray, dimension: int) -> np.ndarray:
    arr = np.asarray(queries, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != dimension:
        raise DataError(f"query dimension {arr.shape[-1] if arr.size else 0} != train dimension {dimension}")
    if not np.all(np.isfinite(arr)):
        raise DataError("query contains non-finite values")
    return arr


def knn_predict_batch(train: LabeledDataset, queries, cfg: KnnConfig = KnnConfig()) -> np.ndarray:
    """Majority label among the k nearest training points, per query row."""
    if train.n_samples == 0:
        raise DataError("training set is empty")
    if cfg.k > train.n_samples:
        raise DataError(f"k={cfg.k} exceeds training size {train.n_samples}")
    queries = _check_query_matrix(queries, train.dimension)

    X = train.features
    if cfg.normalization == "minmax":
        mins, spans = fit_bounds(X)
        X = scale_features(X, mins, spans, clip=False)
        queries = scale_features(queries, mins, spans, clip=True)

    # squared distances preserve the euclidean ordering exactly; summing over
    # the last axis keeps float rounding identical to the possible-worlds engine
    diffs = X[None, :, :] - queries[:, None, :]
    d2 = (diffs * diffs).sum(axis=-1)
    return vote_on_distances(d2, train.labels, cfg.k, train.class_count)


def vote_on_distances(d2: np.ndarray, labels: np.ndarray, k: int, class_count: int) -> np.ndarray:
    """Tie-stable vote: stable argsort over (distance, index), argmax over class counts."""
    if k == 1:
        nearest = np.argmin(d2, axis=1)  # first occurrence wins index ties
        return labels[nearest]
    order = np.argsort(d2, axis=1, kind="stable")[:, :k]
    neighbor_labels = labels[order]
    counts = (neighbor_labels[:, :, None] == np.arange(class_count)[None, None, :]).sum(axis=1)
    return np.argmax(counts, axis=1)  # first max wins class ties


def knn_predict(train: LabeledDataset, query, cfg: KnnConfig = KnnConfig()) -> int:
    """Predict the label index for a single query point."""
    return int(knn_predict_batch(train, query, cfg)[0])


def holdout_error(train: LabeledDataset, holdout: LabeledDataset, cfg: KnnConfig = KnnConfig()) -> float:
    """Mean 0-1 loss of knn_predict over the holdout split."""
    if holdout.n_samples == 0:
        raise DataError("holdout set is empty")
    if holdout.dimension != train.dimension:
        raise DataError(f"dimension mismatch: train d={train.dimension}, holdout d={holdout.dimension}")
    if holdout.classes != train.classes:
        raise DataError("train and holdout label spaces differ")
    predictions = knn_predict_batch(train, holdout.features, cfg)
    return float(np.mean(predictions != holdout.labels))
