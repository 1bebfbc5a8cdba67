"""Feasibility estimation: Bayes-error-rate bounds from nearest-neighbor error.

Answers "is my target accuracy realistic?" before any training happens. For
each candidate feature embedding, a 1-nearest-neighbor classifier is scored
on a held-out split and its error is inverted into lower/upper bounds on the
Bayes error rate; the best achievable accuracy is 1 minus the lower bound.

k is pinned to 1 so there is nothing to tune. Embeddings are consumed as
precomputed, index-aligned tables; the reserved name ``identity`` keeps the
raw features. Estimates are asymptotic, so split sizes are always reported
next to them and no finite-sample correction is applied.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from dqops.core import DataError, LabeledDataset, Seed, load_feature_table, subseed_rng
from dqops.knn import KnnConfig, holdout_error

IDENTITY = "identity"

# the inversion applied to the 1-NN error; recorded in every report
INVERSION = "one_nn_asymptotic"


@dataclass(frozen=True)
class EmbeddingSpec:
    """A named feature transformation given as precomputed tables per split."""

    name: str
    train_source: str | None = None
    validation_source: str | None = None
    dimension: int | None = None

    def __post_init__(self) -> None:
        if not self.name:
            raise DataError("embedding name must be nonempty")
        if self.name == IDENTITY:
            if self.train_source or self.validation_source:
                raise DataError("the identity embedding takes no source files")
        elif not (self.train_source and self.validation_source):
            raise DataError(
                f"embedding {self.name!r} needs train and validation tables"
            )

    @classmethod
    def identity(cls) -> "EmbeddingSpec":
        return cls(IDENTITY)

    @classmethod
    def parse_cli_spec(cls, text: str) -> "EmbeddingSpec":
        """Parse ``identity`` or ``name=train.csv:validation.csv``."""
        if text == IDENTITY:
            return cls.identity()
        if "=" not in text:
            raise DataError(f"bad embedding spec {text!r}; use name=TRAIN:VALIDATION")
        name, _, sources = text.partition("=")
        train, sep, validation = sources.partition(":")
        if not sep or not train or not validation:
            raise DataError(f"bad embedding spec {text!r}; use name=TRAIN:VALIDATION")
        return cls(name, train, validation)


@dataclass(frozen=True)
class BEREstimate:
    """Lower/upper Bayes-error bounds derived from a kNN holdout error."""

    lower: float
    upper: float
    knn_error: float
    embedding: str
    class_count: int

    def __post_init__(self) -> None:
        if not (0.0 <= self.lower <= self.upper <= 1.0):
            raise DataError(
                f"bounds must satisfy 0 <= lower <= upper <= 1, got ({self.lower}, {self.upper})"
            )

    @property
    def max_accuracy(self) -> float:
        return 1.0 - self.lower

    def to_json_dict(self) -> dict:
        return {
            "embedding": self.embedding,
            "knn_error": self.knn_error,
            "ber_lower": self.lower,
            "ber_upper": self.upper,
            "max_accuracy": self.max_accuracy,
        }


@dataclass(frozen=True)
class NoiseConfig:
    """Symmetric label-flip noise: strength and seed."""

    rho: float
    seed: Seed = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.rho <= 1.0:
            raise DataError(f"rho must be in [0, 1], got {self.rho}")


def ber_bounds_from_knn_error(err: float, class_count: int) -> tuple[float, float]:
    """Invert a 1-NN error into (lower, upper) Bayes-error bounds.

    Uses the classical asymptotic relation between nearest-neighbor risk and
    the Bayes error for C classes; the upper bound is the error itself.
    """
    if not 0.0 <= err <= 1.0:
        raise DataError(f"error rate must be in [0, 1], got {err}")
    if class_count < 2:
        raise DataError(f"need at least 2 classes, got {class_count}")
    c = class_count
    lower = ((c - 1) / c) * (1.0 - math.sqrt(max(0.0, 1.0 - (c / (c - 1)) * err)))
    lower = min(max(lower, 0.0), 1.0)
    upper = min(max(float(err), 0.0), 1.0)
    return min(lower, upper), upper


def apply_embedding(
    spec: EmbeddingSpec, dataset: LabeledDataset, split: str
) -> LabeledDataset:
    """Swap a dataset's features for the embedding's table of the given split."""
    if spec.name == IDENTITY:
        return dataset
    source = spec.train_source if split == "train" else spec.validation_source
    table = load_feature_table(Path(source), prefix="e")
    if table.shape[0] != dataset.n_samples:
        raise DataError(
            f"embedding {spec.name!r} {split} table has {table.shape[0]} rows, "
            f"dataset has {dataset.n_samples}"
        )
    if spec.dimension is not None and table.shape[1] != spec.dimension:
        raise DataError(
            f"embedding {spec.name!r} table dimension {table.shape[1]} != declared {spec.dimension}"
        )
    return dataset.with_features(table)


@dataclass(frozen=True)
class FeasibilityReport:
    """Per-embedding estimates plus the overall (most optimistic) estimate."""

    estimates: tuple[BEREstimate, ...]
    overall: BEREstimate
    train_size: int
    validation_size: int

    def to_json_dict(self) -> dict:
        return {
            "estimates": [e.to_json_dict() for e in self.estimates],
            "overall": self.overall.to_json_dict(),
            "train_size": self.train_size,
            "validation_size": self.validation_size,
            "k": 1,
            "inversion": INVERSION,
        }


def feasibility(
    train: LabeledDataset,
    validation: LabeledDataset,
    embeddings: list[EmbeddingSpec],
    cfg: KnnConfig = KnnConfig(),
) -> FeasibilityReport:
    """Estimate BER bounds per embedding; k is forced to 1 (nothing to tune).

    The overall estimate minimizes the lower bound, breaking ties by lower
    upper bound and then by embedding name.
    """
    if not embeddings:
        raise DataError("at least one embedding is required")
    if len({e.name for e in embeddings}) != len(embeddings):
        raise DataError("embedding names must be unique")
    if train.classes != validation.classes:
        raise DataError("train and validation label spaces differ")
    one_nn = replace(cfg, k=1)
    estimates = []
    for spec in sorted(embeddings, key=lambda e: e.name):
        embedded_train = apply_embedding(spec, train, "train")
        embedded_validation = apply_embedding(spec, validation, "validation")
        err = holdout_error(embedded_train, embedded_validation, one_nn)
        lower, upper = ber_bounds_from_knn_error(err, train.class_count)
        estimates.append(
            BEREstimate(
                lower=lower,
                upper=upper,
                knn_error=err,
                embedding=spec.name,
                class_count=train.class_count,
            )
        )
    overall = min(estimates, key=lambda e: (e.lower, e.upper, e.embedding))
    return FeasibilityReport(
        estimates=tuple(estimates),
        overall=overall,
        train_size=train.n_samples,
        validation_size=validation.n_samples,
    )


def inject_label_noise(data: LabeledDataset, cfg: NoiseConfig) -> LabeledDataset:
    """Flip each label with probability rho to a uniform draw over the others.

    Features are untouched; the result is a pure function of (data, seed).
    """
    rng = subseed_rng(cfg.seed)
    n = data.n_samples
    c = data.class_count
    flip = rng.random(n) < cfg.rho
    # draw over C-1 alternatives, then skip past the original label
    offsets = rng.integers(0, c - 1, size=n)
    flipped = offsets + (offsets >= data.labels)
    labels = np.where(flip, flipped, data.labels)
    return data.with_labels(labels)


def noise_sweep(
    train: LabeledDataset,
    validation: LabeledDataset,
    embedding: EmbeddingSpec,
    rhos: list[float],
    cfg: KnnConfig = KnnConfig(),
    seed: Seed = 0,
) -> list[tuple[float, BEREstimate]]:
    """Feasibility under increasing symmetric label noise on both splits."""
    if list(rhos) != sorted(rhos):
        raise DataError("rhos must be sorted ascending")
    limit = (train.class_count - 1) / train.class_count
    if any(not 0.0 <= r < limit for r in rhos):
        raise DataError(f"each rho must lie in [0, {limit}) for {train.class_count} classes")
    out = []
    for i, rho in enumerate(rhos):
        noisy_train = inject_label_noise(train, NoiseConfig(rho, seed=_child_seed(seed, i, 0)))
        noisy_validation = inject_label_noise(
            validation, NoiseConfig(rho, seed=_child_seed(seed, i, 1))
        )
        report = feasibility(noisy_train, noisy_validation, [embedding], cfg)
        out.append((float(rho), report.overall))
    return out


def _child_seed(seed: Seed, *path: int) -> Seed:
    return int(subseed_rng(seed, *path).integers(0, 2**63))


def sweep_to_json(sweep: list[tuple[float, BEREstimate]]) -> list[dict]:
    return [{"rho": rho, **est.to_json_dict()} for rho, est in sweep]


def full_report_dict(
    train: LabeledDataset,
    validation: LabeledDataset,
    embeddings: list[EmbeddingSpec],
    cfg: KnnConfig = KnnConfig(),
    rhos: list[float] | None = None,
    seed: Seed = 0,
) -> dict:
    """One report document shared verbatim by the CLI and the HTTP service."""
    doc = feasibility(train, validation, embeddings, cfg).to_json_dict()
    if rhos:
        if len(embeddings) != 1:
            raise DataError("a noise sweep needs exactly one embedding")
        sweep = noise_sweep(train, validation, embeddings[0], rhos, cfg, seed)
        doc["noise_sweep"] = sweep_to_json(sweep)
        doc["noise_placement"] = "train+validation"
        doc["noise_seed"] = int(seed)
    return doc
